use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monod growth law μ(s) = μ_max·(1 − burden)·s/(K_s + s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthLaw {
    /// Maximal specific growth rate (min⁻¹).
    pub mu_max: f64,
    /// Half-saturation substrate level (a.u.).
    pub k_s: f64,
    /// Biomass yield per unit substrate.
    #[serde(default = "unit")]
    pub yield_coeff: f64,
    /// Fractional reduction of μ_max from circuit load, in [0, 1).
    #[serde(default)]
    pub burden: f64,
}

fn unit() -> f64 {
    1.0
}

impl GrowthLaw {
    pub fn new(mu_max: f64, k_s: f64) -> Self {
        GrowthLaw {
            mu_max,
            k_s,
            yield_coeff: 1.0,
            burden: 0.0,
        }
    }

    pub fn with_yield(mut self, y: f64) -> Self {
        self.yield_coeff = y;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, value: f64, reason: &'static str| {
            Err(Error::ParameterDomain { name, value, reason })
        };
        if !(self.mu_max > 0.0 && self.mu_max.is_finite()) {
            return bad("mu_max", self.mu_max, "must be positive");
        }
        if !(self.k_s > 0.0 && self.k_s.is_finite()) {
            return bad("k_s", self.k_s, "must be positive");
        }
        if !(self.yield_coeff > 0.0 && self.yield_coeff.is_finite()) {
            return bad("yield_coeff", self.yield_coeff, "must be positive");
        }
        if !(0.0..1.0).contains(&self.burden) {
            return bad("burden", self.burden, "must lie in [0, 1)");
        }
        Ok(())
    }

    #[inline]
    pub fn rate(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        self.mu_max * (1.0 - self.burden) * s / (self.k_s + s)
    }

    /// Substrate level at which μ(s) = d, if reachable.
    pub fn break_even(&self, d: f64) -> Option<f64> {
        let m = self.mu_max * (1.0 - self.burden);
        (d >= 0.0 && d < m).then(|| self.k_s * d / (m - d))
    }
}

/// Crossing of two growth curves: substrate s× with μ₁(s×) = μ₂(s×) > 0 and
/// the shared rate D× = μ₁(s×). Monod curves cross at most once for s > 0.
pub fn crossing(a: &GrowthLaw, b: &GrowthLaw) -> Option<(f64, f64)> {
    let (m1, m2) = (a.mu_max * (1.0 - a.burden), b.mu_max * (1.0 - b.burden));
    // m1(K2 + s) = m2(K1 + s)  ⇒  s = (m2 K1 − m1 K2)/(m1 − m2).
    let denom = m1 - m2;
    if denom == 0.0 {
        return None;
    }
    let s = (m2 * a.k_s - m1 * b.k_s) / denom;
    (s > 0.0 && s.is_finite()).then(|| (s, a.rate(s)))
}

/// Which strain a chemostat at constant dilution `d` favours: the one that
/// breaks even at lower substrate. `None` if neither can grow at `d`.
pub fn favoured_at(a: &GrowthLaw, b: &GrowthLaw, d: f64) -> Option<usize> {
    match (a.break_even(d), b.break_even(d)) {
        (Some(x), Some(y)) => Some(if x <= y { 0 } else { 1 }),
        (Some(_), None) => Some(0),
        (None, Some(_)) => Some(1),
        (None, None) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_of_intersecting_pair() {
        let a = GrowthLaw::new(0.025, 2.0);
        let b = GrowthLaw::new(0.012, 0.2);
        let (s, d) = crossing(&a, &b).unwrap();
        assert!((s - 0.019 / 0.013).abs() < 1e-12);
        assert!((a.rate(s) - b.rate(s)).abs() < 1e-15);
        assert!((d - 0.0105555).abs() < 1e-6);
        assert_eq!(favoured_at(&a, &b, 0.013), Some(0));
        assert_eq!(favoured_at(&a, &b, 0.008), Some(1));
    }

    #[test]
    fn dominant_pair_never_crosses() {
        let a = GrowthLaw::new(0.025, 0.2);
        let b = GrowthLaw::new(0.012, 0.5);
        assert!(crossing(&a, &b).is_none());
        for d in [0.001, 0.005, 0.011] {
            assert_eq!(favoured_at(&a, &b, d), Some(0));
        }
    }

    #[test]
    fn break_even_inverts_rate() {
        let g = GrowthLaw::new(0.02, 1.5);
        let s = g.break_even(0.01).unwrap();
        assert!((g.rate(s) - 0.01).abs() < 1e-15);
        assert!(g.break_even(0.02).is_none());
    }
}
