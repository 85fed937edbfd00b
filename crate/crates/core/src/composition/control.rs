use serde::{Deserialize, Serialize};

use super::growth::{crossing, favoured_at, GrowthLaw};
use super::reactor::{ReactorState, Topology};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionKind {
    OpenLoopConstant,
    #[default]
    BangBang,
    /// Proportional correction around the nominal actuation, clamped to the
    /// bounds.
    GainScheduled,
}

/// Composition feedback: reads the strain-1 fraction r = n1/(n1 + n2) and
/// sets the dilution rate (single chamber) or the transfer rate (dual).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompositionController {
    pub kind: CompositionKind,
    pub target_ratio: f64,
    /// Regulation band: the ratio should stay within ±epsilon of target.
    pub epsilon: f64,
    /// Relay thresholds sit at target ± switch_fraction·epsilon. Values
    /// below one leave room for the overshoot between sampling instants.
    pub switch_fraction: f64,
    /// Actuation bounds (min⁻¹).
    pub lower: f64,
    pub upper: f64,
    /// Actuation of the open-loop mode (min⁻¹).
    pub constant: f64,
    /// Proportional gain of the gain-scheduled mode (min⁻¹ per unit ratio).
    pub gain: f64,
}

impl Default for CompositionController {
    fn default() -> Self {
        CompositionController {
            kind: CompositionKind::BangBang,
            target_ratio: 0.5,
            epsilon: 0.05,
            switch_fraction: 0.5,
            lower: 0.0095,
            upper: 0.0115,
            constant: 0.01,
            gain: 0.05,
        }
    }
}

impl CompositionController {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_ratio > 0.0 && self.target_ratio < 1.0) {
            return Err(Error::validation("target_ratio", "must lie strictly between 0 and 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::validation("epsilon", "hysteresis band must be positive"));
        }
        if !(self.switch_fraction > 0.0 && self.switch_fraction <= 1.0) {
            return Err(Error::validation("switch_fraction", "must lie in (0, 1]"));
        }
        if !(self.lower >= 0.0 && self.upper > self.lower && self.upper.is_finite()) {
            return Err(Error::validation("lower/upper", "bounds must satisfy 0 <= lower < upper"));
        }
        if !(self.constant >= 0.0) {
            return Err(Error::validation("constant", "must be non-negative"));
        }
        Ok(())
    }

    /// Resolves which bound favours strain 1 for the given strains and
    /// topology. A single chamber needs growth curves that cross inside the
    /// bounds.
    pub fn resolve(&self, laws: &[GrowthLaw; 2], topology: Topology) -> Result<SwitchingPolicy> {
        self.validate()?;
        let (favour1, favour2, nominal) = match topology {
            Topology::Single => {
                let infeasible = Error::ActuationInfeasible {
                    d_min: self.lower,
                    d_max: self.upper,
                };
                if self.kind != CompositionKind::OpenLoopConstant {
                    let Some((_, d_cross)) = crossing(&laws[0], &laws[1]) else { return Err(infeasible) };
                    if !(d_cross > self.lower && d_cross < self.upper) {
                        return Err(infeasible);
                    }
                    if favoured_at(&laws[0], &laws[1], self.upper) == Some(0) {
                        (self.upper, self.lower, d_cross)
                    } else {
                        (self.lower, self.upper, d_cross)
                    }
                } else {
                    (self.constant, self.constant, self.constant)
                }
            }
            // More transfer means more strain 2 and more strain-1 washout.
            Topology::Dual => (self.lower, self.upper, 0.5 * (self.lower + self.upper)),
        };
        Ok(SwitchingPolicy {
            ctrl: *self,
            favour1,
            favour2,
            nominal,
        })
    }
}

/// A controller with the actuation direction fixed for a reactor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingPolicy {
    pub ctrl: CompositionController,
    /// Actuation that raises the strain-1 fraction.
    pub favour1: f64,
    /// Actuation that lowers it.
    pub favour2: f64,
    /// Crossing dilution rate (single) or mid-range transfer (dual).
    pub nominal: f64,
}

impl SwitchingPolicy {
    /// Actuation from a measured ratio, holding `previous` inside the band.
    pub fn actuate_ratio(&self, r: f64, previous: f64) -> f64 {
        let c = &self.ctrl;
        match c.kind {
            CompositionKind::OpenLoopConstant => c.constant,
            CompositionKind::BangBang => {
                let band = c.switch_fraction * c.epsilon;
                if r < c.target_ratio - band {
                    self.favour1
                } else if r > c.target_ratio + band {
                    self.favour2
                } else {
                    previous
                }
            }
            CompositionKind::GainScheduled => {
                let dir = (self.favour1 - self.favour2).signum();
                (self.nominal + dir * c.gain * (c.target_ratio - r)).clamp(c.lower, c.upper)
            }
        }
    }
}

/// Next actuation for `state`. The controller reads only the ratio, so a
/// common rescaling of (n1, n2) leaves the decision unchanged.
pub fn switching_controller(state: &ReactorState, policy: &SwitchingPolicy, previous: f64) -> f64 {
    policy.actuate_ratio(state.ratio(), previous)
}

/// Total-biomass band for the dual chamber, actuated by the dilution rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiomassBand {
    pub target: f64,
    /// Relative half-width.
    pub band: f64,
    pub d_low: f64,
    pub d_high: f64,
}

impl BiomassBand {
    pub fn actuate(&self, biomass: f64, previous: f64) -> f64 {
        if biomass > self.target * (1.0 + self.band) {
            self.d_high
        } else if biomass < self.target * (1.0 - self.band) {
            self.d_low
        } else {
            previous
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laws() -> [GrowthLaw; 2] {
        [GrowthLaw::new(0.025, 2.0), GrowthLaw::new(0.012, 0.2)]
    }

    #[test]
    fn deadband_holds_previous() {
        let p = CompositionController::default().resolve(&laws(), Topology::Single).unwrap();
        let st = ReactorState::single(1.0, 1.0, 1.0);
        assert_eq!(switching_controller(&st, &p, 0.0123), 0.0123);
        assert_eq!(p.favour1, 0.0115);
        assert_eq!(switching_controller(&ReactorState::single(1.0, 3.0, 1.0), &p, 0.0), 0.0115);
        assert_eq!(switching_controller(&ReactorState::single(3.0, 1.0, 1.0), &p, 0.0), 0.0095);
    }

    #[test]
    fn non_intersecting_single_chamber_is_infeasible() {
        let dominant = [GrowthLaw::new(0.025, 0.2), GrowthLaw::new(0.012, 0.5)];
        let r = CompositionController::default().resolve(&dominant, Topology::Single);
        assert!(matches!(r, Err(Error::ActuationInfeasible { .. })));
        assert!(CompositionController::default().resolve(&dominant, Topology::Dual).is_ok());
    }

    #[test]
    fn crossing_outside_bounds_is_infeasible() {
        let c = CompositionController {
            lower: 0.011,
            upper: 0.02,
            switch_fraction: 0.5,
            ..Default::default()
        };
        assert!(matches!(c.resolve(&laws(), Topology::Single), Err(Error::ActuationInfeasible { .. })));
    }

    #[test]
    fn invalid_targets_rejected() {
        for c in [
            CompositionController { target_ratio: 1.0, ..Default::default() },
            CompositionController { epsilon: 0.0, ..Default::default() },
            CompositionController { lower: 0.02, ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
