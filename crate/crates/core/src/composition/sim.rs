use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::control::{BiomassBand, CompositionController, SwitchingPolicy};
use super::growth::GrowthLaw;
use super::reactor::{chemostat_slice, dual_slice, ReactorState, Reservoir, Topology};
use crate::error::{Error, Result};
use crate::ode::{rk4_step, Rk4Scratch};

/// How reservoir broth enters the mixing chamber.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Injection {
    /// Continuous transfer at rate u.
    #[default]
    Continuous,
    /// A bolus of volume fraction u·period at every sampling instant.
    Bolus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Measurement {
    /// Sampling period (min).
    pub period: f64,
    /// Multiplicative log-normal noise CV on the measured ratio.
    pub noise_cv: f64,
    pub seed: u64,
}

impl Default for Measurement {
    fn default() -> Self {
        Measurement {
            period: 15.0,
            noise_cv: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReactorConfig {
    pub strain1: GrowthLaw,
    pub strain2: GrowthLaw,
    /// Feed substrate (a.u.).
    pub s_in: f64,
    pub topology: Topology,
    /// Mixing-chamber dilution rate while it is not the actuated input.
    pub dilution: f64,
    /// Reservoir dilution rate (dual only).
    pub reservoir_dilution: f64,
    pub injection: Injection,
    pub biomass: Option<BiomassBand>,
    /// RK4 step (min).
    pub dt: f64,
}

impl Default for ReactorConfig {
    fn default() -> Self {
        ReactorConfig {
            strain1: GrowthLaw::new(0.025, 2.0).with_yield(0.5),
            strain2: GrowthLaw::new(0.012, 0.2).with_yield(0.5),
            s_in: 10.0,
            topology: Topology::Single,
            dilution: 0.01,
            reservoir_dilution: 0.006,
            injection: Injection::Continuous,
            biomass: None,
            dt: 0.25,
        }
    }
}

impl ReactorConfig {
    pub fn laws(&self) -> [GrowthLaw; 2] {
        [self.strain1, self.strain2]
    }

    pub fn validate(&self) -> Result<()> {
        self.strain1.validate()?;
        self.strain2.validate()?;
        for (name, v) in [
            ("s_in", self.s_in),
            ("dilution", self.dilution),
            ("reservoir_dilution", self.reservoir_dilution),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(name, "must be non-negative"));
            }
        }
        if !(self.dt > 0.0) {
            return Err(Error::validation("dt", "must be positive"));
        }
        Ok(())
    }

    /// A state with both strains at `n0` and substrate at the feed level.
    pub fn initial_state(&self, n1: f64, n2: f64) -> ReactorState {
        match self.topology {
            Topology::Single => ReactorState::single(n1, n2, self.s_in),
            Topology::Dual => {
                let s_res = self.strain2.break_even(self.reservoir_dilution).unwrap_or(self.s_in).min(self.s_in);
                let n2_res = self.strain2.yield_coeff * (self.s_in - s_res);
                ReactorState::dual(n1, n2, self.s_in, Reservoir { n2: n2_res, s: s_res })
            }
        }
    }
}

/// One sampling instant: the measured state and the actuation applied over
/// the following period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionSample {
    pub t: f64,
    pub dilution: f64,
    pub transfer: f64,
    pub ratio: f64,
    pub n1: f64,
    pub n2: f64,
    pub s: f64,
}

impl CompositionSample {
    pub const HEADER: [&'static str; 7] = ["time", "D", "u", "r", "n1", "n2", "s"];
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionTrace {
    pub samples: Vec<CompositionSample>,
    /// Number of actuation changes.
    pub switches: usize,
    pub final_state: ReactorState,
}

impl CompositionTrace {
    pub fn ratios(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.ratio).collect()
    }

    /// Largest |r − target| over samples at or after `from`.
    pub fn max_ratio_error(&self, target: f64, from: f64) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.t >= from)
            .map(|s| (s.ratio - target).abs())
            .fold(0.0, f64::max)
    }

    pub fn switches_per_hour(&self) -> f64 {
        let span = self.samples.last().map(|s| s.t).unwrap_or(0.0);
        if span > 0.0 {
            self.switches as f64 * 60.0 / span
        } else {
            0.0
        }
    }
}

fn advance(cfg: &ReactorConfig, y: &mut [f64], d: f64, u: f64, span: f64, scratch: &mut Rk4Scratch) {
    let laws = cfg.laws();
    let n = (span / cfg.dt).ceil().max(1.0) as usize;
    let h = span / n as f64;
    for _ in 0..n {
        match cfg.topology {
            Topology::Single => rk4_step(|_, y, dy| chemostat_slice(y, d, &laws, cfg.s_in, dy), 0.0, y, h, scratch),
            Topology::Dual => rk4_step(
                |_, y, dy| dual_slice(y, d, u, cfg.reservoir_dilution, &laws, cfg.s_in, dy),
                0.0,
                y,
                h,
                scratch,
            ),
        }
        for v in y.iter_mut() {
            *v = v.max(0.0);
        }
    }
}

/// Simulates the reactor under sampled composition feedback for `horizon`
/// minutes. The actuation is held between sampling instants.
pub fn simulate(
    cfg: &ReactorConfig,
    ctrl: &CompositionController,
    meas: &Measurement,
    init: &ReactorState,
    horizon: f64,
) -> Result<CompositionTrace> {
    cfg.validate()?;
    if init.topology() != cfg.topology {
        return Err(Error::Config("initial state topology does not match the reactor".into()));
    }
    if !init.is_non_negative() {
        return Err(Error::Domain("initial reactor state has a negative entry".into()));
    }
    if !(meas.period > 0.0) || !(meas.noise_cv >= 0.0) {
        return Err(Error::validation("measurement", "period must be positive and noise non-negative"));
    }
    let policy: SwitchingPolicy = ctrl.resolve(&cfg.laws(), cfg.topology)?;
    let noise = (meas.noise_cv > 0.0)
        .then(|| LogNormal::from_mean_cv(1.0, meas.noise_cv).map_err(|e| Error::validation("noise_cv", e.to_string())))
        .transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(meas.seed);
    let mut y = init.to_vec();
    let mut scratch = Rk4Scratch::default();
    let dual = cfg.topology == Topology::Dual;
    let mut act = policy.nominal;
    let mut dil = cfg.dilution;
    let mut samples = Vec::new();
    let mut switches = 0;
    let steps = (horizon / meas.period).round() as usize;
    for k in 0..=steps {
        let t = k as f64 * meas.period;
        let state = ReactorState::from_slice(&y);
        let mut r = state.ratio();
        if let Some(dist) = &noise {
            r = (r * dist.sample(&mut rng)).min(1.0);
        }
        let next = policy.actuate_ratio(r, act);
        if k > 0 && next != act {
            switches += 1;
        }
        act = next;
        if let (true, Some(band)) = (dual, cfg.biomass) {
            dil = band.actuate(state.biomass(), dil);
        }
        let (d, u) = if dual { (dil, act) } else { (act, 0.0) };
        samples.push(CompositionSample {
            t,
            dilution: d,
            transfer: u,
            ratio: state.ratio(),
            n1: state.n1,
            n2: state.n2,
            s: state.s,
        });
        if k == steps {
            break;
        }
        if dual && cfg.injection == Injection::Bolus {
            let f = (u * meas.period).min(1.0);
            y[0] *= 1.0 - f;
            y[1] = y[1] * (1.0 - f) + f * y[3];
            y[2] = y[2] * (1.0 - f) + f * y[4];
            advance(cfg, &mut y, d, 0.0, meas.period, &mut scratch);
        } else {
            advance(cfg, &mut y, d, u, meas.period, &mut scratch);
        }
    }
    Ok(CompositionTrace {
        samples,
        switches,
        final_state: ReactorState::from_slice(&y),
    })
}

/// Runs the reactor at a constant actuation (dilution for a single chamber,
/// transfer for a dual one).
pub fn simulate_constant(cfg: &ReactorConfig, value: f64, init: &ReactorState, horizon: f64) -> Result<CompositionTrace> {
    let ctrl = CompositionController {
        kind: super::control::CompositionKind::OpenLoopConstant,
        constant: value,
        lower: 0.0,
        upper: value.max(1e-12) * 2.0,
        ..Default::default()
    };
    simulate(cfg, &ctrl, &Measurement::default(), init, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bang_bang_holds_intersecting_pair_in_band() {
        let cfg = ReactorConfig::default();
        let ctrl = CompositionController::default();
        let trace = simulate(&cfg, &ctrl, &Measurement::default(), &cfg.initial_state(0.5, 0.5), 200.0 * 60.0).unwrap();
        let err = trace.max_ratio_error(0.5, 50.0 * 60.0);
        assert!(err < ctrl.epsilon, "{err}");
        assert!(trace.switches > 0);
    }

    #[test]
    fn constant_dilution_excludes_weaker_strain() {
        let cfg = ReactorConfig {
            strain1: GrowthLaw::new(0.025, 0.2).with_yield(0.5),
            strain2: GrowthLaw::new(0.012, 0.5).with_yield(0.5),
            ..Default::default()
        };
        let trace = simulate_constant(&cfg, 0.008, &cfg.initial_state(0.1, 1.0), 200.0 * 60.0).unwrap();
        assert!(trace.final_state.ratio() > 0.999);
    }
}
