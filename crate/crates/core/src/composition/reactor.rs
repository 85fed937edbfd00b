use serde::{Deserialize, Serialize};

use super::growth::GrowthLaw;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    #[default]
    Single,
    /// Mixing chamber fed from a strain-2 reservoir chemostat.
    Dual,
}

/// Reservoir chemostat of the dual-chamber set-up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Reservoir {
    pub n2: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReactorState {
    pub n1: f64,
    pub n2: f64,
    pub s: f64,
    pub reservoir: Option<Reservoir>,
}

impl ReactorState {
    pub fn single(n1: f64, n2: f64, s: f64) -> Self {
        ReactorState {
            n1,
            n2,
            s,
            reservoir: None,
        }
    }

    pub fn dual(n1: f64, n2: f64, s: f64, reservoir: Reservoir) -> Self {
        ReactorState {
            n1,
            n2,
            s,
            reservoir: Some(reservoir),
        }
    }

    pub fn topology(&self) -> Topology {
        if self.reservoir.is_some() {
            Topology::Dual
        } else {
            Topology::Single
        }
    }

    /// Strain-1 fraction n1/(n1 + n2); 0 for an empty chamber.
    pub fn ratio(&self) -> f64 {
        let total = self.n1 + self.n2;
        if total > 0.0 {
            self.n1 / total
        } else {
            0.0
        }
    }

    pub fn biomass(&self) -> f64 {
        self.n1 + self.n2
    }

    pub fn is_non_negative(&self) -> bool {
        let r = self.reservoir.unwrap_or_default();
        [self.n1, self.n2, self.s, r.n2, r.s].iter().all(|v| *v >= 0.0)
    }

    /// Flat layout [n1, n2, s, n2_res, s_res] (reservoir slots only for dual).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.n1, self.n2, self.s];
        if let Some(r) = self.reservoir {
            v.extend([r.n2, r.s]);
        }
        v
    }

    pub fn from_slice(y: &[f64]) -> Self {
        ReactorState {
            n1: y[0],
            n2: y[1],
            s: y[2],
            reservoir: (y.len() >= 5).then(|| Reservoir { n2: y[3], s: y[4] }),
        }
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be non-negative and finite, got {v}")))
    }
}

/// Single-chamber co-culture balances at dilution rate `d`.
pub fn chemostat_rhs(state: &ReactorState, d: f64, laws: &[GrowthLaw; 2], s_in: f64) -> Result<ReactorState> {
    check_rate("dilution rate", d)?;
    check_rate("feed substrate", s_in)?;
    let mut dy = [0.0; 3];
    chemostat_slice(&[state.n1, state.n2, state.s], d, laws, s_in, &mut dy);
    Ok(ReactorState {
        n1: dy[0],
        n2: dy[1],
        s: dy[2],
        reservoir: state.reservoir.map(|_| Reservoir::default()),
    })
}

#[inline]
pub(crate) fn chemostat_slice(y: &[f64], d: f64, laws: &[GrowthLaw; 2], s_in: f64, dy: &mut [f64]) {
    let (m1, m2) = (laws[0].rate(y[2]), laws[1].rate(y[2]));
    dy[0] = (m1 - d) * y[0];
    dy[1] = (m2 - d) * y[1];
    dy[2] = d * (s_in - y[2]) - m1 * y[0] / laws[0].yield_coeff - m2 * y[1] / laws[1].yield_coeff;
}

/// Dual-chamber balances. The reservoir runs a strain-2 monoculture at
/// dilution `d_res`; the mixing chamber runs at `d` and additionally
/// receives reservoir broth at volumetric rate `u`, which carries n2_res and
/// s_res in and washes every mixing-chamber species out at the same rate.
pub fn dual_chamber_rhs(
    state: &ReactorState,
    d: f64,
    u: f64,
    d_res: f64,
    laws: &[GrowthLaw; 2],
    s_in: f64,
) -> Result<ReactorState> {
    check_rate("dilution rate", d)?;
    check_rate("transfer rate", u)?;
    check_rate("reservoir dilution rate", d_res)?;
    check_rate("feed substrate", s_in)?;
    let Some(_) = state.reservoir else {
        return Err(Error::Domain("dual-chamber balance needs a reservoir state".into()));
    };
    let mut dy = [0.0; 5];
    dual_slice(&state.to_vec(), d, u, d_res, laws, s_in, &mut dy);
    Ok(ReactorState::from_slice(&dy))
}

#[inline]
pub(crate) fn dual_slice(y: &[f64], d: f64, u: f64, d_res: f64, laws: &[GrowthLaw; 2], s_in: f64, dy: &mut [f64]) {
    chemostat_slice(&y[..3], d, laws, s_in, &mut dy[..3]);
    let (n2r, sr) = (y[3], y[4]);
    dy[0] -= u * y[0];
    dy[1] += u * (n2r - y[1]);
    dy[2] += u * (sr - y[2]);
    let m2r = laws[1].rate(sr);
    dy[3] = (m2r - d_res) * n2r;
    dy[4] = d_res * (s_in - sr) - m2r * n2r / laws[1].yield_coeff;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laws() -> [GrowthLaw; 2] {
        [GrowthLaw::new(0.025, 2.0).with_yield(0.5), GrowthLaw::new(0.012, 0.2).with_yield(0.5)]
    }

    #[test]
    fn empty_reactor_relaxes_substrate() {
        let d = chemostat_rhs(&ReactorState::single(0.0, 0.0, 3.0), 0.01, &laws(), 10.0).unwrap();
        assert_eq!((d.n1, d.n2), (0.0, 0.0));
        assert!((d.s - 0.01 * 7.0).abs() < 1e-15);
    }

    #[test]
    fn single_strain_equilibrium_sits_at_break_even() {
        let l = laws();
        let dil = 0.01;
        let s = l[0].break_even(dil).unwrap();
        let n1 = l[0].yield_coeff * (10.0 - s);
        let d = chemostat_rhs(&ReactorState::single(n1, 0.0, s), dil, &l, 10.0).unwrap();
        assert!(d.n1.abs() < 1e-15 && d.s.abs() < 1e-15);
    }

    #[test]
    fn zero_transfer_decouples_chambers() {
        let l = laws();
        let st = ReactorState::dual(1.0, 2.0, 3.0, Reservoir { n2: 4.0, s: 0.5 });
        let dual = dual_chamber_rhs(&st, 0.01, 0.0, 0.006, &l, 10.0).unwrap();
        let mix = chemostat_rhs(&st, 0.01, &l, 10.0).unwrap();
        let res = chemostat_rhs(&ReactorState::single(0.0, 4.0, 0.5), 0.006, &l, 10.0).unwrap();
        assert_eq!((dual.n1, dual.n2, dual.s), (mix.n1, mix.n2, mix.s));
        let r = dual.reservoir.unwrap();
        assert_eq!((r.n2, r.s), (res.n2, res.s));
    }

    #[test]
    fn transfer_reseeds_extinct_strain() {
        let st = ReactorState::dual(1.0, 0.0, 3.0, Reservoir { n2: 4.0, s: 0.5 });
        let d = dual_chamber_rhs(&st, 0.01, 0.002, 0.006, &laws(), 10.0).unwrap();
        assert!(d.n2 > 0.0);
    }

    #[test]
    fn negative_rates_are_domain_errors() {
        let st = ReactorState::single(1.0, 1.0, 1.0);
        assert!(matches!(chemostat_rhs(&st, -0.1, &laws(), 10.0), Err(Error::Domain(_))));
        assert!(dual_chamber_rhs(&st, 0.01, 0.01, 0.006, &laws(), 10.0).is_err());
    }
}
