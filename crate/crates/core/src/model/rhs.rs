//! Right-hand sides of the two-population closed loop and of a single QS
//! channel. The term helpers are shared with the composed controller models
//! so that the integral-only composition evaluates exactly the same floating
//! point expressions.

use crate::error::{Error, Result};
use crate::model::hill::hill;
use crate::model::state::{idx, AggregateState, QsChannelState, STATE_DIM};
use crate::model::{ConsortiumParams, ReferenceSignal};

/// Sequestration flux γ_z·Z₁·Z₂, removed identically from both species.
#[inline]
pub fn sequestration(p: &ConsortiumParams, z1: f64, z2: f64) -> f64 {
    p.gamma_z * z1 * z2
}

/// dZ₁/dt and dZ₂/dt of the antithetic motif given the production inputs
/// μ·Y_d and θ·Qx_i.
#[inline]
pub fn antithetic_terms(p: &ConsortiumParams, z1: f64, z2: f64, prod1: f64, prod2: f64) -> (f64, f64) {
    let seq = sequestration(p, z1, z2);
    (prod1 - seq - p.gamma * z1, prod2 - seq - p.gamma * z2)
}

/// Intracellular QS species in a producing cell: production, dilution and
/// membrane exchange with the medium.
#[inline]
pub fn sender_term(p: &ConsortiumParams, production: f64, q_in: f64, q_ext: f64) -> f64 {
    production - p.gamma * q_in + p.eta * (q_ext - q_in)
}

/// Intracellular QS species in a receiving cell.
#[inline]
pub fn receiver_term(p: &ConsortiumParams, q_in: f64, q_ext: f64) -> f64 {
    -p.gamma * q_in + p.eta * (q_ext - q_in)
}

/// Medium-side exchange flux contributed by a population of density `n`
/// holding intracellular concentration `q_in`.
#[inline]
pub fn exchange_flux(p: &ConsortiumParams, n: f64, q_in: f64, q_ext: f64) -> f64 {
    n * p.eta * (q_in - q_ext)
}

/// dX_c/dt.
#[inline]
pub fn output_term(p: &ConsortiumParams, qu_t: f64, xc: f64) -> f64 {
    hill(qu_t, p.alpha_0, p.alpha_max, p.k_u, p.n_u) - p.gamma * xc
}

/// Which of the two loop configurations to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoopMode {
    #[default]
    Closed,
    /// Feedback severed: Z₂ production off and controllers take up no Qx
    /// (their Qx slot is held at its initial value, normally zero).
    Open,
}

/// Slice form of the closed-loop right-hand side, used by the integrators.
#[inline]
pub fn closed_loop_rhs_slice(p: &ConsortiumParams, yd: f64, y: &[f64], dy: &mut [f64], mode: LoopMode) {
    let [z1, z2, qu_i, qu_e, qu_t, xc, qx_t, qx_e, qx_i] =
        [y[0], y[1], y[2], y[3], y[4], y[5], y[6], y[7], y[8]];
    let feedback = match mode {
        LoopMode::Closed => p.theta * qx_i,
        LoopMode::Open => 0.0,
    };
    let (dz1, dz2) = antithetic_terms(p, z1, z2, p.mu * yd, feedback);
    dy[idx::Z1] = dz1;
    dy[idx::Z2] = dz2;
    dy[idx::QU_I] = sender_term(p, p.beta_u * z1, qu_i, qu_e);
    dy[idx::XC] = output_term(p, qu_t, xc);
    dy[idx::QX_T] = sender_term(p, p.beta_x * xc, qx_t, qx_e);
    dy[idx::QU_T] = receiver_term(p, qu_t, qu_e);
    dy[idx::QU_E] =
        exchange_flux(p, p.n_c, qu_i, qu_e) + exchange_flux(p, p.n_t, qu_t, qu_e) - p.gamma_e * qu_e;
    match mode {
        LoopMode::Closed => {
            dy[idx::QX_I] = receiver_term(p, qx_i, qx_e);
            dy[idx::QX_E] = exchange_flux(p, p.n_t, qx_t, qx_e) + exchange_flux(p, p.n_c, qx_i, qx_e)
                - p.gamma_e * qx_e;
        }
        LoopMode::Open => {
            dy[idx::QX_I] = 0.0;
            dy[idx::QX_E] = exchange_flux(p, p.n_t, qx_t, qx_e) - p.gamma_e * qx_e;
        }
    }
}

/// Time derivative of the nine-state closed loop with Y_d = `reference(t)`.
pub fn closed_loop_rhs(
    t: f64,
    s: &AggregateState,
    p: &ConsortiumParams,
    reference: &ReferenceSignal,
) -> Result<AggregateState> {
    p.validate()?;
    let yd = reference.eval(t)?;
    let y = s.to_array();
    let mut dy = [0.0; STATE_DIM];
    closed_loop_rhs_slice(p, yd, &y, &mut dy, LoopMode::Closed);
    Ok(AggregateState::from(dy))
}

/// Sender / receiver / well-mixed medium balance of one QS channel with
/// sender density `p.n_c` and receiver density `p.n_t`.
pub fn qs_channel_rhs(s: &QsChannelState, f_prod: f64, p: &ConsortiumParams) -> Result<QsChannelState> {
    p.validate()?;
    if f_prod < 0.0 || !f_prod.is_finite() {
        return Err(Error::Domain(format!("production rate must be non-negative, got {f_prod}")));
    }
    Ok(qs_channel_rhs_unchecked(s, f_prod, p))
}

#[inline]
pub fn qs_channel_rhs_unchecked(s: &QsChannelState, f_prod: f64, p: &ConsortiumParams) -> QsChannelState {
    QsChannelState {
        q_s: f_prod - p.gamma_q * s.q_s - p.eta_s * (s.q_s - s.q_e),
        q_r: -p.gamma_q * s.q_r - p.eta_r * (s.q_r - s.q_e),
        q_e: p.eta_s * (s.q_s - s.q_e) * p.n_c + p.eta_r * (s.q_r - s.q_e) * p.n_t - p.gamma_e * s.q_e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nominal() -> ConsortiumParams {
        ConsortiumParams::nominal()
    }

    #[test]
    fn origin_is_equilibrium_without_leak() {
        let p = ConsortiumParams {
            alpha_0: 0.0,
            ..nominal()
        };
        let d = closed_loop_rhs(0.0, &AggregateState::ZERO, &p, &ReferenceSignal::constant(0.0)).unwrap();
        assert_eq!(d, AggregateState::ZERO);
    }

    #[test]
    fn origin_with_reference() {
        let p = nominal();
        let d = closed_loop_rhs(3.0, &AggregateState::ZERO, &p, &ReferenceSignal::constant(2.5)).unwrap();
        assert_eq!(d.z1, p.mu * 2.5);
        assert_eq!(d.xc, p.alpha_0);
        for v in [d.z2, d.qu_i, d.qu_e, d.qu_t, d.qx_t, d.qx_e, d.qx_i] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn qs_equal_concentrations() {
        let p = nominal();
        let c = 0.7;
        let s = QsChannelState { q_s: c, q_r: c, q_e: c };
        let d = qs_channel_rhs(&s, 0.0, &p).unwrap();
        assert_eq!(d.q_s, -p.gamma_q * c);
        assert_eq!(d.q_r, -p.gamma_q * c);
        assert_eq!(d.q_e, -p.gamma_e * c);
        let z = qs_channel_rhs(&QsChannelState::default(), 0.0, &p).unwrap();
        assert_eq!(z, QsChannelState::default());
        assert!(qs_channel_rhs(&s, -1.0, &p).is_err());
    }

    #[test]
    fn qs_steady_state_matches_linear_solve() {
        // Oracle: solve A x = b for the 3x3 linear system by Cramer's rule.
        let p = ConsortiumParams {
            eta_s: 1.3,
            eta_r: 0.7,
            gamma_q: 0.05,
            gamma_e: 0.2,
            n_c: 0.3,
            n_t: 0.6,
            ..nominal()
        };
        let f = 0.9;
        let a = [
            [-(p.gamma_q + p.eta_s), 0.0, p.eta_s],
            [0.0, -(p.gamma_q + p.eta_r), p.eta_r],
            [p.eta_s * p.n_c, p.eta_r * p.n_t, -(p.eta_s * p.n_c + p.eta_r * p.n_t + p.gamma_e)],
        ];
        let b = [-f, 0.0, 0.0];
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det3(a);
        let mut x = [0.0; 3];
        for (k, xk) in x.iter_mut().enumerate() {
            let mut m = a;
            for r in 0..3 {
                m[r][k] = b[r];
            }
            *xk = det3(m) / d;
        }
        let s = QsChannelState {
            q_s: x[0],
            q_r: x[1],
            q_e: x[2],
        };
        let r = qs_channel_rhs(&s, f, &p).unwrap();
        for v in [r.q_s, r.q_r, r.q_e] {
            assert!(v.abs() < 1e-13, "{v}");
        }
    }

    #[test]
    fn sequestration_contribution_bitwise_equal() {
        let p = nominal();
        let (z1, z2) = (0.37, 1.91);
        let (d1, d2) = antithetic_terms(&p, z1, z2, 0.0, 0.0);
        let seq = sequestration(&p, z1, z2);
        assert_eq!(d1 + p.gamma * z1, -seq);
        assert_eq!(d2 + p.gamma * z2, -seq);
    }

    #[test]
    fn open_loop_severs_feedback() {
        let p = nominal();
        let y = [0.2, 0.3, 0.1, 0.1, 0.1, 1.0, 2.0, 1.5, 0.9];
        let mut dy = [0.0; 9];
        closed_loop_rhs_slice(&p, 1.0, &y, &mut dy, LoopMode::Open);
        assert_eq!(dy[idx::QX_I], 0.0);
        assert_eq!(dy[idx::Z2], -p.gamma_z * 0.2 * 0.3 - p.gamma * 0.3);
        assert_eq!(dy[idx::QX_E], p.n_t * p.eta * (2.0 - 1.5) - p.gamma_e * 1.5);
    }

    /// Independent re-statement of the nine equations, written out longhand.
    fn oracle(p: &ConsortiumParams, yd: f64, s: &[f64; 9]) -> [f64; 9] {
        let (z1, z2, qui, que, qut, xc, qxt, qxe, qxi) = (s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7], s[8]);
        let f = if qut == 0.0 {
            p.alpha_0
        } else {
            p.alpha_0 + (p.alpha_max - p.alpha_0) / (1.0 + (p.k_u / qut).powf(p.n_u))
        };
        [
            p.mu * yd - p.gamma_z * z1 * z2 - p.gamma * z1,
            p.theta * qxi - p.gamma_z * z1 * z2 - p.gamma * z2,
            p.beta_u * z1 - p.gamma * qui + p.eta * (que - qui),
            p.n_c * p.eta * (qui - que) + p.n_t * p.eta * (qut - que) - p.gamma_e * que,
            -p.gamma * qut + p.eta * (que - qut),
            f - p.gamma * xc,
            p.beta_x * xc - p.gamma * qxt + p.eta * (qxe - qxt),
            p.n_t * p.eta * (qxt - qxe) + p.n_c * p.eta * (qxi - qxe) - p.gamma_e * qxe,
            -p.gamma * qxi + p.eta * (qxe - qxi),
        ]
    }

    fn scale() -> impl Strategy<Value = f64> {
        (-2.0f64..1.0).prop_map(|e| 10f64.powf(e))
    }

    proptest! {
        #[test]
        fn matches_longhand_oracle(
            s in prop::array::uniform9(0.0f64..5.0),
            yd in 0.0f64..5.0,
            mu in scale(), theta in scale(), gz in scale(), bu in scale(), bx in scale(),
            eta in scale(), ge in scale(), nc in scale(), nt in scale(),
        ) {
            let p = ConsortiumParams { mu, theta, gamma_z: gz, beta_u: bu, beta_x: bx, eta, gamma_e: ge,
                n_c: nc, n_t: nt, ..nominal() };
            let got = closed_loop_rhs(0.0, &AggregateState::from(s), &p, &ReferenceSignal::constant(yd)).unwrap();
            let want = oracle(&p, yd, &s);
            for (g, w) in got.to_array().iter().zip(want.iter()) {
                let tol = 1e-12 * (1.0 + w.abs() + s.iter().cloned().fold(0.0, f64::max) * 100.0);
                prop_assert!((g - w).abs() <= tol, "{g} vs {w}");
            }
        }

        #[test]
        fn boundary_derivatives_point_inward(
            s in prop::array::uniform9(0.0f64..5.0),
            zero in 0usize..9,
            yd in 0.0f64..5.0,
        ) {
            let mut s = s;
            s[zero] = 0.0;
            let d = closed_loop_rhs(0.0, &AggregateState::from(s), &nominal(), &ReferenceSignal::constant(yd))
                .unwrap()
                .to_array();
            prop_assert!(d[zero] >= 0.0);
        }

        #[test]
        fn jacobian_central_differences_consistent(
            s in prop::array::uniform9(0.1f64..3.0),
            yd in 0.1f64..3.0,
        ) {
            // Second-order central differences at step h and h/2 must agree
            // (they converge to the same analytic Jacobian).
            let p = nominal();
            let f = |y: &[f64; 9]| {
                let mut d = [0.0; 9];
                closed_loop_rhs_slice(&p, yd, y, &mut d, LoopMode::Closed);
                d
            };
            for j in 0..9 {
                let col = |h: f64| {
                    let mut a = s; let mut b = s;
                    a[j] += h; b[j] -= h;
                    let (fa, fb) = (f(&a), f(&b));
                    let mut c = [0.0; 9];
                    for i in 0..9 { c[i] = (fa[i] - fb[i]) / (2.0 * h); }
                    c
                };
                let (c1, c2) = (col(1e-4), col(5e-5));
                for i in 0..9 {
                    let scale = c1[i].abs().max(1.0);
                    prop_assert!((c1[i] - c2[i]).abs() / scale < 1e-6, "d{i}/d{j}: {} vs {}", c1[i], c2[i]);
                }
            }
        }
    }
}
