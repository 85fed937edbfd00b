use serde::{Deserialize, Serialize};

use super::control::CompositionController;
use super::growth::GrowthLaw;
use super::reactor::{chemostat_slice, dual_slice, ReactorState, Topology};
use super::sim::{Measurement, ReactorConfig};
use crate::error::{Error, Result};
use crate::model::rhs::{closed_loop_rhs_slice, LoopMode};
use crate::model::state::{idx, STATE_DIM};
use crate::model::{AggregateState, ConsortiumParams, ReferenceSignal};
use crate::ode::{self, IntegratorConfig, OdeSystem, StiffPair};

/// Map from reactor densities to the consortium's volume fractions, plus
/// the optional growth burden of circuit activity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Coupling {
    /// Volume fraction per unit reactor density: N_c = κ·n1, N_t = κ·n2.
    pub kappa: f64,
    /// Fractional μ_max loss of strain 1 (controllers) at full activity Z₁.
    pub burden_controller: f64,
    /// Fractional μ_max loss of strain 2 (targets) at full activity X_c.
    pub burden_target: f64,
    /// Half-activity level of the burden saturations.
    pub k_activity: f64,
    /// Hold the reactor state fixed (densities become constants).
    pub frozen: bool,
}

impl Default for Coupling {
    fn default() -> Self {
        Coupling {
            kappa: 0.02,
            burden_controller: 0.0,
            burden_target: 0.0,
            k_activity: 1.0,
            frozen: false,
        }
    }
}

/// Aggregate closed loop whose densities follow a reactor. State layout:
/// the nine aggregate slots, then the reactor slots.
#[derive(Debug, Clone)]
pub struct CoupledModel {
    pub params: ConsortiumParams,
    pub reference: ReferenceSignal,
    pub reactor: ReactorConfig,
    pub coupling: Coupling,
    /// Mixing-chamber dilution and transfer currently applied.
    pub dilution: f64,
    pub transfer: f64,
}

/// Builds the combined model. Fails if the map can produce volume fractions
/// above one at the reactor's largest attainable biomass.
pub fn couple_composition(
    params: ConsortiumParams,
    reference: ReferenceSignal,
    reactor: ReactorConfig,
    coupling: Coupling,
) -> Result<CoupledModel> {
    params.validate()?;
    reference.validate()?;
    reactor.validate()?;
    if !(coupling.kappa > 0.0 && coupling.kappa.is_finite()) {
        return Err(Error::Config(format!("coupling kappa must be positive, got {}", coupling.kappa)));
    }
    let max_biomass = reactor.s_in * reactor.strain1.yield_coeff.max(reactor.strain2.yield_coeff);
    if coupling.kappa * max_biomass > 1.0 {
        return Err(Error::Config(format!(
            "kappa {} maps the attainable biomass {max_biomass} to a volume fraction above 1",
            coupling.kappa
        )));
    }
    for b in [coupling.burden_controller, coupling.burden_target] {
        if !(0.0..1.0).contains(&b) {
            return Err(Error::Config(format!("burden {b} must lie in [0, 1)")));
        }
    }
    if !(coupling.k_activity > 0.0) {
        return Err(Error::Config("k_activity must be positive".into()));
    }
    Ok(CoupledModel {
        params,
        reference,
        reactor,
        coupling,
        dilution: reactor.dilution,
        transfer: 0.0,
    })
}

impl CoupledModel {
    /// Consortium parameters with densities taken from reactor slots `r`.
    #[inline]
    pub fn params_at(&self, r: &[f64]) -> ConsortiumParams {
        ConsortiumParams {
            n_c: self.coupling.kappa * r[0],
            n_t: self.coupling.kappa * r[1],
            ..self.params
        }
    }

    fn laws_at(&self, y: &[f64]) -> [GrowthLaw; 2] {
        let c = &self.coupling;
        let act = |v: f64| v.max(0.0) / (v.max(0.0) + c.k_activity);
        let mut laws = self.reactor.laws();
        laws[0].burden = 1.0 - (1.0 - laws[0].burden) * (1.0 - c.burden_controller * act(y[idx::Z1]));
        laws[1].burden = 1.0 - (1.0 - laws[1].burden) * (1.0 - c.burden_target * act(y[idx::XC]));
        laws
    }

    pub fn initial_state(&self, agg: &AggregateState, reactor: &ReactorState) -> Vec<f64> {
        let mut y = agg.to_array().to_vec();
        y.extend(reactor.to_vec());
        y
    }
}

impl OdeSystem for CoupledModel {
    fn dim(&self) -> usize {
        STATE_DIM
            + match self.reactor.topology {
                Topology::Single => 3,
                Topology::Dual => 5,
            }
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let (agg, r) = y.split_at(STATE_DIM);
        let (dagg, dr) = dy.split_at_mut(STATE_DIM);
        let p = self.params_at(r);
        closed_loop_rhs_slice(&p, self.reference.value_at(t.max(0.0)), agg, dagg, LoopMode::Closed);
        if self.coupling.frozen {
            dr.fill(0.0);
            return;
        }
        let laws = self.laws_at(agg);
        match self.reactor.topology {
            Topology::Single => chemostat_slice(r, self.dilution, &laws, self.reactor.s_in, dr),
            Topology::Dual => dual_slice(
                r,
                self.dilution,
                self.transfer,
                self.reactor.reservoir_dilution,
                &laws,
                self.reactor.s_in,
                dr,
            ),
        }
    }

    fn stiff_pair(&self, t: f64, y: &[f64]) -> Option<StiffPair> {
        let p = &self.params;
        Some(StiffPair {
            i1: idx::Z1,
            i2: idx::Z2,
            prod1: p.mu * self.reference.value_at(t.max(0.0)),
            prod2: p.theta * y[idx::QX_I],
            gamma: p.gamma,
            gamma_z: p.gamma_z,
        })
    }
}

/// Samples of a coupled run: aggregate state, reactor state and actuation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrace {
    pub times: Vec<f64>,
    pub states: Vec<AggregateState>,
    pub reactor: Vec<ReactorState>,
    pub dilution: Vec<f64>,
    pub transfer: Vec<f64>,
}

impl CoupledTrace {
    pub fn xc(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.xc).collect()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.reactor.iter().map(|r| r.ratio()).collect()
    }
}

/// Runs the coupled model to `horizon`. With a controller, the actuation is
/// recomputed every `meas.period` from the reactor ratio and held in
/// between; without one, the reactor runs at its configured dilution.
pub fn simulate_coupled(
    model: &CoupledModel,
    ctrl: Option<&CompositionController>,
    meas: &Measurement,
    y0: &[f64],
    horizon: f64,
    integ: &IntegratorConfig,
) -> Result<CoupledTrace> {
    if y0.len() != model.dim() {
        return Err(Error::Contract(format!("coupled state needs {} components, got {}", model.dim(), y0.len())));
    }
    let policy = ctrl.map(|c| c.resolve(&model.reactor.laws(), model.reactor.topology)).transpose()?;
    let mut m = model.clone();
    let mut act = policy.map(|p| p.nominal);
    let mut y = y0.to_vec();
    let mut out = CoupledTrace {
        times: Vec::new(),
        states: Vec::new(),
        reactor: Vec::new(),
        dilution: Vec::new(),
        transfer: Vec::new(),
    };
    let period = if policy.is_some() { meas.period } else { horizon.max(integ.output_dt) };
    let mut t = 0.0;
    loop {
        let r = ReactorState::from_slice(&y[STATE_DIM..]);
        if let (Some(p), Some(a)) = (&policy, act.as_mut()) {
            *a = p.actuate_ratio(r.ratio(), *a);
            match m.reactor.topology {
                Topology::Single => m.dilution = *a,
                Topology::Dual => m.transfer = *a,
            }
        }
        let end = (t + period).min(horizon);
        let cfg = IntegratorConfig {
            horizon: end,
            output_dt: integ.output_dt,
            ..*integ
        };
        let sol = ode::solve(&m, t, &y, &cfg)?;
        let skip = if out.times.is_empty() { 0 } else { 1 };
        for i in skip..sol.len() {
            let row = sol.row(i);
            out.times.push(sol.t[i]);
            out.states.push(AggregateState::from_slice(&row[..STATE_DIM]));
            out.reactor.push(ReactorState::from_slice(&row[STATE_DIM..]));
            out.dilution.push(m.dilution);
            out.transfer.push(m.transfer);
        }
        y.copy_from_slice(sol.last());
        t = end;
        if t >= horizon - 1e-9 {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{integrate, AggregateModel};
    use crate::ode::Method;

    #[test]
    fn frozen_densities_reproduce_the_aggregate_exactly() {
        let p = ConsortiumParams::nominal();
        let reference = ReferenceSignal::step(0.0, 1.0, 30.0);
        let reactor = ReactorConfig::default();
        let coupling = Coupling {
            frozen: true,
            kappa: 0.01,
            ..Default::default()
        };
        let model = couple_composition(p, reference.clone(), reactor, coupling).unwrap();
        let r0 = ReactorState::single(5.0, 5.0, 1.0);
        let y0 = model.initial_state(&AggregateState::ZERO, &r0);
        let cfg = IntegratorConfig {
            method: Method::Rk4,
            dt: 0.01,
            horizon: 300.0,
            output_dt: 5.0,
            ..Default::default()
        };
        let coupled = simulate_coupled(&model, None, &Measurement::default(), &y0, 300.0, &cfg).unwrap();
        let matched = ConsortiumParams {
            n_c: 0.05,
            n_t: 0.05,
            ..p
        };
        let direct = integrate(&matched, &reference, &AggregateState::ZERO, &cfg).unwrap();
        assert_eq!(coupled.times, direct.times);
        assert_eq!(coupled.states, direct.states);
        assert!(coupled.reactor.iter().all(|r| *r == r0));
        let _ = AggregateModel::new(matched, reference);
    }

    #[test]
    fn oversized_kappa_is_config_error() {
        let r = couple_composition(
            ConsortiumParams::nominal(),
            ReferenceSignal::constant(1.0),
            ReactorConfig::default(),
            Coupling {
                kappa: 1.0,
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
