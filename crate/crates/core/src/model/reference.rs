use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// External reference Y_d(t) supplied to the controllers.
///
/// Every variant is clipped at zero from below because Y_d drives a
/// production rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSignal {
    Constant {
        value: f64,
    },
    /// `before` until `at`, `after` from `at` on (right-continuous).
    Step {
        before: f64,
        after: f64,
        at: f64,
    },
    /// low, ramp up, hold high, ramp down, hold low.
    Trapezoid {
        low: f64,
        high: f64,
        start: f64,
        rise: f64,
        hold: f64,
        fall: f64,
    },
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Piecewise-constant levels switching at `times` (ascending);
    /// `values[0]` applies before `times[0]`.
    Piecewise {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl ReferenceSignal {
    pub fn constant(value: f64) -> Self {
        ReferenceSignal::Constant { value }
    }

    pub fn step(before: f64, after: f64, at: f64) -> Self {
        ReferenceSignal::Step { before, after, at }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::validation("reference", m.to_string()));
        match self {
            ReferenceSignal::Trapezoid { rise, hold, fall, .. } => {
                if *rise < 0.0 || *hold < 0.0 || *fall < 0.0 {
                    return bad("trapezoid durations must be non-negative");
                }
            }
            ReferenceSignal::Sinusoid { period, .. } => {
                if *period <= 0.0 {
                    return bad("sinusoid period must be positive");
                }
            }
            ReferenceSignal::Piecewise { times, values } => {
                if values.len() != times.len() + 1 {
                    return bad("piecewise needs exactly one more value than switch times");
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("piecewise switch times must be strictly increasing");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Y_d(t); errors for negative t.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::Domain(format!("reference evaluated at negative time {t}")));
        }
        Ok(self.value_at(t))
    }

    /// Y_d(t) without the domain check, for use inside right-hand sides.
    #[inline]
    pub fn value_at(&self, t: f64) -> f64 {
        let raw = match self {
            ReferenceSignal::Constant { value } => *value,
            ReferenceSignal::Step { before, after, at } => {
                if t < *at {
                    *before
                } else {
                    *after
                }
            }
            ReferenceSignal::Trapezoid {
                low,
                high,
                start,
                rise,
                hold,
                fall,
            } => {
                let t1 = start + rise;
                let t2 = t1 + hold;
                let t3 = t2 + fall;
                if t < *start || t >= t3 {
                    *low
                } else if t < t1 {
                    low + (high - low) * (t - start) / rise
                } else if t < t2 {
                    *high
                } else {
                    high + (low - high) * (t - t2) / fall
                }
            }
            ReferenceSignal::Sinusoid {
                mean,
                amplitude,
                period,
                phase,
            } => mean + amplitude * (std::f64::consts::TAU * t / period + phase).sin(),
            ReferenceSignal::Piecewise { times, values } => {
                let idx = times.partition_point(|&s| s <= t);
                values[idx]
            }
        };
        raw.max(0.0)
    }

    /// Largest value attained (used to size plots and sweeps).
    pub fn peak(&self) -> f64 {
        match self {
            ReferenceSignal::Constant { value } => value.max(0.0),
            ReferenceSignal::Step { before, after, .. } => before.max(*after).max(0.0),
            ReferenceSignal::Trapezoid { low, high, .. } => low.max(*high).max(0.0),
            ReferenceSignal::Sinusoid { mean, amplitude, .. } => (mean + amplitude.abs()).max(0.0),
            ReferenceSignal::Piecewise { values, .. } => values.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Time of the last discontinuity or shape change, if any; used as the
    /// origin for settling-time measurements.
    pub fn last_event(&self) -> f64 {
        match self {
            ReferenceSignal::Step { at, .. } => *at,
            ReferenceSignal::Trapezoid {
                start, rise, hold, fall, ..
            } => start + rise + hold + fall,
            ReferenceSignal::Piecewise { times, .. } => times.last().copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant() {
        let r = ReferenceSignal::constant(5.0);
        for t in [0.0, 1.0, 1e6] {
            assert_eq!(r.eval(t).unwrap(), 5.0);
        }
    }

    #[test]
    fn step_is_right_continuous() {
        let r = ReferenceSignal::step(0.0, 5.0, 100.0);
        assert_eq!(r.eval(99.0).unwrap(), 0.0);
        assert_eq!(r.eval(100.0).unwrap(), 5.0);
    }

    #[test]
    fn sinusoid_clipped_at_minimum() {
        for phase in [0.0, 1.0, -2.5] {
            let r = ReferenceSignal::Sinusoid {
                mean: 3.0,
                amplitude: 5.0,
                period: 60.0,
                phase,
            };
            // sin(2πt/P + φ) = −1 at t = (3π/2 − φ)·P/(2π), shifted into t ≥ 0.
            let mut t = (1.5 * std::f64::consts::PI - phase) * 60.0 / std::f64::consts::TAU;
            while t < 0.0 {
                t += 60.0;
            }
            assert_eq!(r.eval(t).unwrap(), 0.0);
        }
    }

    #[test]
    fn trapezoid_shape() {
        let r = ReferenceSignal::Trapezoid {
            low: 1.0,
            high: 3.0,
            start: 10.0,
            rise: 10.0,
            hold: 20.0,
            fall: 10.0,
        };
        assert_eq!(r.value_at(0.0), 1.0);
        assert_eq!(r.value_at(15.0), 2.0);
        assert_eq!(r.value_at(25.0), 3.0);
        assert_eq!(r.value_at(45.0), 2.0);
        assert_eq!(r.value_at(60.0), 1.0);
        assert_eq!(r.last_event(), 50.0);
    }

    #[test]
    fn piecewise_levels() {
        let r = ReferenceSignal::Piecewise {
            times: vec![10.0, 20.0],
            values: vec![1.0, 2.0, -3.0],
        };
        r.validate().unwrap();
        assert_eq!(r.value_at(9.999), 1.0);
        assert_eq!(r.value_at(10.0), 2.0);
        assert_eq!(r.value_at(25.0), 0.0);
        let bad = ReferenceSignal::Piecewise {
            times: vec![10.0],
            values: vec![1.0],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn negative_time_is_domain_error() {
        assert!(ReferenceSignal::constant(1.0).eval(-1e-9).is_err());
    }
}
