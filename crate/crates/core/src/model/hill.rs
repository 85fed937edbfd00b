use crate::error::{Error, Result};
use crate::model::ConsortiumParams;

/// Saturating activation α₀ + (α_max − α₀)/(1 + (K/q)ⁿ).
///
/// Returns α₀ for q ≤ 0 (the q → 0⁺ limit). Computed as α₀ + Δα·qⁿ/(Kⁿ + qⁿ)
/// so that q = 0 never divides by zero.
#[inline]
pub fn hill(q: f64, alpha_0: f64, alpha_max: f64, k: f64, n: f64) -> f64 {
    if q <= 0.0 {
        return alpha_0;
    }
    let r = (q / k).powf(n);
    alpha_0 + (alpha_max - alpha_0) * r / (1.0 + r)
}

/// Hill activation of X_c expression by the intracellular control signal.
pub fn hill_activation(q: f64, p: &ConsortiumParams) -> Result<f64> {
    if p.k_u <= 0.0 {
        return Err(Error::ParameterDomain {
            name: "k_u",
            value: p.k_u,
            reason: "dissociation constant must be positive",
        });
    }
    if p.n_u < 1.0 {
        return Err(Error::ParameterDomain {
            name: "n_u",
            value: p.n_u,
            reason: "Hill coefficient must be at least 1",
        });
    }
    if q < 0.0 || q.is_nan() {
        return Err(Error::Domain(format!("Hill input must be non-negative, got {q}")));
    }
    Ok(hill(q, p.alpha_0, p.alpha_max, p.k_u, p.n_u))
}

/// Inverse on the open interval (α₀, α_max): the input that yields `rate`.
pub fn hill_inverse(rate: f64, alpha_0: f64, alpha_max: f64, k: f64, n: f64) -> Option<f64> {
    if rate <= alpha_0 || rate >= alpha_max {
        return None;
    }
    let frac = (rate - alpha_0) / (alpha_max - alpha_0);
    Some(k * (frac / (1.0 - frac)).powf(1.0 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(a0: f64, amax: f64, k: f64, n: f64) -> ConsortiumParams {
        ConsortiumParams {
            alpha_0: a0,
            alpha_max: amax,
            k_u: k,
            n_u: n,
            ..ConsortiumParams::nominal()
        }
    }

    #[test]
    fn zero_input_gives_basal() {
        let p = params(0.3, 2.0, 1.5, 2.0);
        assert_eq!(hill_activation(0.0, &p).unwrap(), 0.3);
    }

    #[test]
    fn half_maximal_at_k() {
        let p = params(0.2, 1.0, 0.7, 3.0);
        let v = hill_activation(0.7, &p).unwrap();
        assert!((v - 0.6).abs() < 1e-15);
    }

    #[test]
    fn ten_k_with_n2() {
        // 100/101 from direct arithmetic: (10)^2 / (1 + 10^2).
        let p = params(0.0, 1.0, 1.0, 2.0);
        let v = hill_activation(10.0, &p).unwrap();
        assert!((v - 100.0 / 101.0).abs() < 1e-15);
        assert!((v - 0.990099).abs() < 1e-6);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(matches!(
            hill_activation(1.0, &params(0.0, 1.0, 0.0, 2.0)),
            Err(Error::ParameterDomain { name: "k_u", .. })
        ));
        assert!(matches!(
            hill_activation(1.0, &params(0.0, 1.0, 1.0, 0.9)),
            Err(Error::ParameterDomain { name: "n_u", .. })
        ));
        assert!(hill_activation(-1.0, &params(0.0, 1.0, 1.0, 2.0)).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        let q = hill_inverse(hill(0.37, 0.01, 0.5, 0.2, 2.0), 0.01, 0.5, 0.2, 2.0).unwrap();
        assert!((q - 0.37).abs() < 1e-12);
        assert_eq!(hill_inverse(0.5, 0.01, 0.5, 0.2, 2.0), None);
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(
            a0 in 0.0f64..1.0,
            span in 0.0f64..5.0,
            k in 0.01f64..10.0,
            n in 1.0f64..6.0,
            q1 in 0.0f64..50.0,
            dq in 0.0f64..50.0,
        ) {
            let p = params(a0, a0 + span, k, n);
            let lo = hill_activation(q1, &p).unwrap();
            let hi = hill_activation(q1 + dq, &p).unwrap();
            prop_assert!(lo <= hi + 1e-15);
            prop_assert!(lo >= a0 - 1e-15 && hi <= a0 + span + 1e-15);
        }
    }
}
