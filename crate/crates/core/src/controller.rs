//! Multicellular P / I / PI / PD / PID controllers. Each enabled action is
//! carried by its own controller population; all of them write into the
//! same extracellular control channel and read the same feedback channel.
//!
//! Composed state layout: the nine aggregate slots (the integral branch
//! lives in Z₁, Z₂, Qu_i, Qx_i and those slots stay at zero when it is
//! disabled), then `[S_p, Qu_p, Qx_p]` if the proportional branch is
//! enabled, then `[X_f, X_s, Qu_d, Qx_d]` if the derivative branch is.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::hill::hill;
use crate::model::rhs::{antithetic_terms, exchange_flux, output_term, receiver_term, sender_term, sequestration};
use crate::model::state::{idx, STATE_DIM};
use crate::model::{ConsortiumParams, ReferenceSignal};
use crate::ode::{OdeSystem, StiffPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ControllerKind {
    P,
    I,
    PI,
    PD,
    PID,
}

/// One controller population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Integral,
    Proportional,
    Derivative,
}

impl ControllerKind {
    pub fn has(&self, b: Branch) -> bool {
        use ControllerKind::*;
        match b {
            Branch::Integral => matches!(self, I | PI | PID),
            Branch::Proportional => matches!(self, P | PI | PD | PID),
            Branch::Derivative => matches!(self, PD | PID),
        }
    }

    pub fn branches(&self) -> Vec<Branch> {
        [Branch::Integral, Branch::Proportional, Branch::Derivative]
            .into_iter()
            .filter(|b| self.has(*b))
            .collect()
    }

    /// Inverse of [`ControllerKind::branches`].
    pub fn from_branches(branches: &[Branch]) -> Result<Self> {
        let has = |b| branches.contains(&b);
        Ok(match (has(Branch::Proportional), has(Branch::Integral), has(Branch::Derivative)) {
            (true, false, false) => ControllerKind::P,
            (false, true, false) => ControllerKind::I,
            (true, true, false) => ControllerKind::PI,
            (true, false, true) => ControllerKind::PD,
            (true, true, true) => ControllerKind::PID,
            (false, false, false) => return Err(Error::Config("controller needs at least one branch".into())),
            _ => {
                return Err(Error::Config(
                    "unsupported branch combination; the family is P, I, PI, PD and PID".into(),
                ))
            }
        })
    }
}

/// Proportional branch: the error activates synthase expression (Hill,
/// zero basal), the synthase makes the control signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProportionalParams {
    /// Maximal synthase expression (conc·min⁻¹).
    pub k_p: f64,
    /// Half-activation of the error input (conc).
    pub k_half: f64,
    pub n: f64,
}

impl Default for ProportionalParams {
    fn default() -> Self {
        ProportionalParams {
            k_p: 0.02,
            k_half: 1.0,
            n: 1.0,
        }
    }
}

/// Derivative branch: incoherent feedforward loop. The error drives a fast
/// activator X_f and a slow inhibitor X_s; the branch produces the control
/// signal at `basal·σ(k_d·(X_f − X_s)/k_half)` with σ(z) = 2/(1 + e^{−2z}),
/// so the output equals `basal` whenever the input is constant and swings
/// between 0 and 2·basal on transients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DerivativeBranchParams {
    /// Activation and turnover rate of X_f (min⁻¹).
    pub k_fast: f64,
    /// Activation and turnover rate of X_s (min⁻¹); must be below `k_fast`.
    pub k_slow: f64,
    /// Dimensionless gain.
    pub k_d: f64,
    /// Scale of the activator/inhibitor imbalance (conc).
    pub k_half: f64,
    /// Adapted control-signal production (conc·min⁻¹).
    pub basal: f64,
}

impl Default for DerivativeBranchParams {
    fn default() -> Self {
        DerivativeBranchParams {
            k_fast: 1.0,
            k_slow: 0.05,
            k_d: 3.0,
            k_half: 0.2,
            basal: 0.5,
        }
    }
}

impl DerivativeBranchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_slow > 0.0 && self.k_fast > self.k_slow) {
            return Err(Error::validation(
                "derivative",
                format!("need 0 < k_slow < k_fast, got k_slow = {}, k_fast = {}", self.k_slow, self.k_fast),
            ));
        }
        if !(self.k_d > 0.0 && self.k_half > 0.0 && self.basal > 0.0) {
            return Err(Error::validation("derivative", "k_d, k_half and basal must be positive"));
        }
        Ok(())
    }

    /// Output as a function of the activator/inhibitor imbalance.
    #[inline]
    pub fn output(&self, imbalance: f64) -> f64 {
        let z = self.k_d * imbalance / self.k_half;
        self.basal * 2.0 / (1.0 + (-2.0 * z).exp())
    }

    /// Small-signal steady response to an input ramp of slope `r`: the
    /// imbalance settles at r(1/k_slow − 1/k_fast) and σ'(0) = 1.
    pub fn ramp_increment(&self, r: f64) -> f64 {
        self.basal * self.k_d / self.k_half * r * (1.0 / self.k_slow - 1.0 / self.k_fast)
    }
}

/// Densities of the branch populations. `None` fields take an equal share
/// of `ConsortiumParams::n_c` among the enabled branches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchDensities {
    pub integral: Option<f64>,
    pub proportional: Option<f64>,
    pub derivative: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub proportional: ProportionalParams,
    pub derivative: DerivativeBranchParams,
    /// Turnover of the titration pair that encodes the error in P and D
    /// cells (min⁻¹). Fast turnover makes it a comparator, not an integrator.
    pub comparator_decay: f64,
    pub densities: BranchDensities,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            proportional: ProportionalParams::default(),
            derivative: DerivativeBranchParams::default(),
            comparator_decay: 1.0,
            densities: BranchDensities::default(),
        }
    }
}

/// Free activator of a titration pair at quasi-steady state.
///
/// The pair a' = p_a − γ_z·a·b − δa, b' = p_b − γ_z·a·b − δb has
/// a − b = (p_a − p_b)/δ at equilibrium, so a solves
/// γ_z·a² + (δ − γ_z·Δ)·a − p_a = 0. The positive root is returned in a
/// cancellation-free form. For large γ_z this is ≈ max(Δ, 0): a one-sided
/// encoding of reference minus feedback.
#[inline]
pub fn titration_error(p_a: f64, p_b: f64, gamma_z: f64, decay: f64) -> f64 {
    if p_a <= 0.0 {
        return 0.0;
    }
    let delta = (p_a - p_b) / decay;
    let b = gamma_z * delta - decay;
    let disc = (b * b + 4.0 * gamma_z * p_a).sqrt();
    if b >= 0.0 {
        (b + disc) / (2.0 * gamma_z)
    } else {
        2.0 * p_a / (disc - b)
    }
}

/// Inputs a branch population sees: the reference and the medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchInput {
    pub yd: f64,
    pub qu_e: f64,
    pub qx_e: f64,
}

/// Intracellular species of one branch population.
///
/// Layouts: integral `[Z1, Z2, Qu, Qx]`, proportional `[S, Qu, Qx]`,
/// derivative `[X_f, X_s, Qu, Qx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchState {
    pub branch: Branch,
    pub species: Vec<f64>,
}

impl BranchState {
    pub fn zero(branch: Branch) -> Self {
        BranchState {
            branch,
            species: vec![0.0; branch_len(branch)],
        }
    }
}

pub fn branch_len(b: Branch) -> usize {
    match b {
        Branch::Integral => 4,
        Branch::Proportional => 3,
        Branch::Derivative => 4,
    }
}

/// Derivative of one branch's species and its control-signal production
/// (conc·min⁻¹) at this state.
pub fn branch_rhs(
    state: &BranchState,
    input: BranchInput,
    p: &ConsortiumParams,
    cfg: &ControllerConfig,
    d: &mut [f64],
) -> Result<f64> {
    if state.species.len() != branch_len(state.branch) || d.len() != state.species.len() {
        return Err(Error::Contract("branch state has the wrong layout".into()));
    }
    if input.yd < 0.0 || input.qu_e < 0.0 || input.qx_e < 0.0 {
        return Err(Error::Domain("branch inputs must be non-negative".into()));
    }
    let s = &state.species;
    Ok(match state.branch {
        Branch::Integral => {
            let (dz1, dz2) = antithetic_terms(p, s[0], s[1], p.mu * input.yd, p.theta * s[3]);
            let prod = p.beta_u * s[0];
            d[0] = dz1;
            d[1] = dz2;
            d[2] = sender_term(p, prod, s[2], input.qu_e);
            d[3] = receiver_term(p, s[3], input.qx_e);
            prod
        }
        Branch::Proportional => proportional_into(p, cfg, input.yd, s, input.qu_e, input.qx_e, d),
        Branch::Derivative => derivative_into(p, cfg, input.yd, s, input.qu_e, input.qx_e, d),
    })
}

#[inline]
fn comparator(p: &ConsortiumParams, cfg: &ControllerConfig, yd: f64, qx: f64) -> f64 {
    titration_error(p.mu * yd, p.theta * qx, p.gamma_z, cfg.comparator_decay)
}

#[inline]
fn proportional_into(
    p: &ConsortiumParams,
    cfg: &ControllerConfig,
    yd: f64,
    s: &[f64],
    qu_e: f64,
    qx_e: f64,
    d: &mut [f64],
) -> f64 {
    let pp = &cfg.proportional;
    let e = comparator(p, cfg, yd, s[2]);
    let prod = p.beta_u * s[0];
    d[0] = pp.k_p * hill(e, 0.0, 1.0, pp.k_half, pp.n) - p.gamma * s[0];
    d[1] = sender_term(p, prod, s[1], qu_e);
    d[2] = receiver_term(p, s[2], qx_e);
    prod
}

#[inline]
fn derivative_into(
    p: &ConsortiumParams,
    cfg: &ControllerConfig,
    yd: f64,
    s: &[f64],
    qu_e: f64,
    qx_e: f64,
    d: &mut [f64],
) -> f64 {
    let dp = &cfg.derivative;
    let e = comparator(p, cfg, yd, s[3]);
    let prod = dp.output(s[0] - s[1]);
    d[0] = dp.k_fast * (e - s[0]);
    d[1] = dp.k_slow * (e - s[1]);
    d[2] = sender_term(p, prod, s[2], qu_e);
    d[3] = receiver_term(p, s[3], qx_e);
    prod
}

/// Per-branch medium fluxes of the control signal at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxBreakdown {
    /// (branch, density·η·(Qu_k − Qu_e)) for each enabled branch.
    pub control: Vec<(Branch, f64)>,
    /// Target-side exchange of the control signal.
    pub target: f64,
    pub degradation: f64,
}

impl FluxBreakdown {
    pub fn branch_sum(&self) -> f64 {
        let mut it = self.control.iter().map(|(_, f)| *f);
        let first = it.next().unwrap_or(0.0);
        it.fold(first, |a, f| a + f)
    }
}

/// Closed loop with an arbitrary member of the controller family.
#[derive(Debug, Clone)]
pub struct ComposedController {
    pub kind: ControllerKind,
    pub params: ConsortiumParams,
    pub reference: ReferenceSignal,
    pub config: ControllerConfig,
    n_i: f64,
    n_p: f64,
    n_d: f64,
    p_off: usize,
    d_off: usize,
    dim: usize,
}

/// Builds the composed closed loop. Errors if no branch is enabled.
pub fn compose_controller(
    branches: &[Branch],
    p: &ConsortiumParams,
    reference: ReferenceSignal,
    config: ControllerConfig,
) -> Result<ComposedController> {
    let kind = ControllerKind::from_branches(branches)?;
    ComposedController::new(kind, *p, reference, config)
}

impl ComposedController {
    pub fn new(
        kind: ControllerKind,
        params: ConsortiumParams,
        reference: ReferenceSignal,
        config: ControllerConfig,
    ) -> Result<Self> {
        params.validate()?;
        reference.validate()?;
        if kind.has(Branch::Derivative) {
            config.derivative.validate()?;
        }
        if kind.has(Branch::Proportional) {
            let pp = &config.proportional;
            if !(pp.k_p > 0.0 && pp.k_half > 0.0 && pp.n >= 1.0) {
                return Err(Error::validation("proportional", "need k_p > 0, k_half > 0 and n >= 1"));
            }
        }
        if (kind.has(Branch::Proportional) || kind.has(Branch::Derivative)) && config.comparator_decay <= 0.0 {
            return Err(Error::validation("comparator_decay", "must be positive"));
        }
        let share = params.n_c / kind.branches().len() as f64;
        let pick = |b: Branch, v: Option<f64>| if kind.has(b) { v.unwrap_or(share) } else { 0.0 };
        let dens = config.densities;
        let n_i = pick(Branch::Integral, dens.integral);
        let n_p = pick(Branch::Proportional, dens.proportional);
        let n_d = pick(Branch::Derivative, dens.derivative);
        for (name, v) in [("integral", n_i), ("proportional", n_p), ("derivative", n_d)] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::validation(format!("densities.{name}"), "must be non-negative"));
            }
        }
        let p_off = STATE_DIM;
        let d_off = p_off + if kind.has(Branch::Proportional) { 3 } else { 0 };
        let dim = d_off + if kind.has(Branch::Derivative) { 4 } else { 0 };
        Ok(ComposedController {
            kind,
            params,
            reference,
            config,
            n_i,
            n_p,
            n_d,
            p_off,
            d_off,
            dim,
        })
    }

    pub fn density(&self, b: Branch) -> f64 {
        match b {
            Branch::Integral => self.n_i,
            Branch::Proportional => self.n_p,
            Branch::Derivative => self.n_d,
        }
    }

    /// Offset of a branch's block in the composed state (the integral
    /// branch is scattered over the aggregate slots and reports `None`).
    pub fn block_offset(&self, b: Branch) -> Option<usize> {
        match b {
            Branch::Proportional if self.kind.has(b) => Some(self.p_off),
            Branch::Derivative if self.kind.has(b) => Some(self.d_off),
            _ => None,
        }
    }

    pub fn zero_state(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    pub fn flux_breakdown(&self, y: &[f64]) -> FluxBreakdown {
        let p = &self.params;
        let qu_e = y[idx::QU_E];
        let mut control = Vec::with_capacity(3);
        if self.kind.has(Branch::Integral) {
            control.push((Branch::Integral, exchange_flux(p, self.n_i, y[idx::QU_I], qu_e)));
        }
        if self.kind.has(Branch::Proportional) {
            control.push((Branch::Proportional, exchange_flux(p, self.n_p, y[self.p_off + 1], qu_e)));
        }
        if self.kind.has(Branch::Derivative) {
            control.push((Branch::Derivative, exchange_flux(p, self.n_d, y[self.d_off + 2], qu_e)));
        }
        FluxBreakdown {
            control,
            target: exchange_flux(p, p.n_t, y[idx::QU_T], qu_e),
            degradation: p.gamma_e * qu_e,
        }
    }

    /// Control-signal production of each enabled branch population.
    pub fn branch_production(&self, t: f64, y: &[f64]) -> Vec<(Branch, f64)> {
        let mut d = vec![0.0; self.dim];
        let mut out = Vec::new();
        self.eval(t, y, &mut d, |b, prod| out.push((b, prod)));
        out
    }

    fn eval<F: FnMut(Branch, f64)>(&self, t: f64, y: &[f64], dy: &mut [f64], mut report: F) {
        let p = &self.params;
        let cfg = &self.config;
        let yd = self.reference.value_at(t.max(0.0));
        let (qu_e, qx_e) = (y[idx::QU_E], y[idx::QX_E]);

        if self.kind.has(Branch::Integral) {
            let (dz1, dz2) = antithetic_terms(p, y[idx::Z1], y[idx::Z2], p.mu * yd, p.theta * y[idx::QX_I]);
            dy[idx::Z1] = dz1;
            dy[idx::Z2] = dz2;
            let prod = p.beta_u * y[idx::Z1];
            dy[idx::QU_I] = sender_term(p, prod, y[idx::QU_I], qu_e);
            dy[idx::QX_I] = receiver_term(p, y[idx::QX_I], qx_e);
            report(Branch::Integral, prod);
        } else {
            dy[idx::Z1] = 0.0;
            dy[idx::Z2] = 0.0;
            dy[idx::QU_I] = 0.0;
            dy[idx::QX_I] = 0.0;
        }
        if self.kind.has(Branch::Proportional) {
            let o = self.p_off;
            let prod = proportional_into(p, cfg, yd, &y[o..o + 3], qu_e, qx_e, &mut dy[o..o + 3]);
            report(Branch::Proportional, prod);
        }
        if self.kind.has(Branch::Derivative) {
            let o = self.d_off;
            let prod = derivative_into(p, cfg, yd, &y[o..o + 4], qu_e, qx_e, &mut dy[o..o + 4]);
            report(Branch::Derivative, prod);
        }

        let xc = y[idx::XC];
        dy[idx::XC] = output_term(p, y[idx::QU_T], xc);
        dy[idx::QX_T] = sender_term(p, p.beta_x * xc, y[idx::QX_T], qx_e);
        dy[idx::QU_T] = receiver_term(p, y[idx::QU_T], qu_e);

        let flux = self.flux_breakdown(y);
        dy[idx::QU_E] = flux.branch_sum() + flux.target - flux.degradation;

        let mut qx = exchange_flux(p, p.n_t, y[idx::QX_T], qx_e);
        if self.kind.has(Branch::Integral) {
            qx += exchange_flux(p, self.n_i, y[idx::QX_I], qx_e);
        }
        if self.kind.has(Branch::Proportional) {
            qx += exchange_flux(p, self.n_p, y[self.p_off + 2], qx_e);
        }
        if self.kind.has(Branch::Derivative) {
            qx += exchange_flux(p, self.n_d, y[self.d_off + 3], qx_e);
        }
        dy[idx::QX_E] = qx - p.gamma_e * qx_e;
    }

    /// Same sequestration flux the aggregate model uses, exposed for tests.
    pub fn sequestration(&self, y: &[f64]) -> f64 {
        sequestration(&self.params, y[idx::Z1], y[idx::Z2])
    }
}

impl OdeSystem for ComposedController {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.eval(t, y, dy, |_, _| {});
    }

    fn stiff_pair(&self, t: f64, y: &[f64]) -> Option<StiffPair> {
        if !self.kind.has(Branch::Integral) {
            return None;
        }
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rhs::{closed_loop_rhs_slice, LoopMode};
    use proptest::prelude::*;

    fn nominal() -> ConsortiumParams {
        ConsortiumParams::nominal()
    }

    #[test]
    fn empty_branch_set_is_config_error() {
        let r = compose_controller(&[], &nominal(), ReferenceSignal::constant(1.0), ControllerConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn kinds_round_trip_through_branches() {
        use ControllerKind::*;
        for k in [P, I, PI, PD, PID] {
            assert_eq!(ControllerKind::from_branches(&k.branches()).unwrap(), k);
        }
    }

    #[test]
    fn proportional_zero_input_gives_zero_contribution() {
        let mut d = [0.0; 3];
        let prod = branch_rhs(
            &BranchState::zero(Branch::Proportional),
            BranchInput {
                yd: 0.0,
                qu_e: 0.0,
                qx_e: 0.0,
            },
            &nominal(),
            &ControllerConfig::default(),
            &mut d,
        )
        .unwrap();
        assert_eq!(prod, 0.0);
        assert_eq!(d, [0.0; 3]);
    }

    #[test]
    fn derivative_adapted_state_outputs_basal() {
        let cfg = ControllerConfig::default();
        let p = nominal();
        let input = BranchInput {
            yd: 1.0,
            qu_e: 0.2,
            qx_e: 0.1,
        };
        let qx = 0.1 * p.eta / (p.eta + p.gamma);
        let e = titration_error(p.mu, p.theta * qx, p.gamma_z, cfg.comparator_decay);
        let state = BranchState {
            branch: Branch::Derivative,
            species: vec![e, e, 0.3, qx],
        };
        let mut d = [0.0; 4];
        let prod = branch_rhs(&state, input, &p, &cfg, &mut d).unwrap();
        assert_eq!(prod, cfg.derivative.basal);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn titration_error_limits() {
        // Large sequestration: free activator ≈ max(Δ, 0).
        let e = titration_error(3.0, 1.0, 1e6, 1.0);
        assert!((e - 2.0).abs() < 1e-5);
        let e = titration_error(1.0, 3.0, 1e6, 1.0);
        assert!((0.0..1e-5).contains(&e));
        assert_eq!(titration_error(0.0, 1.0, 10.0, 1.0), 0.0);
        // Residual of the quadratic.
        let (pa, pb, gz, dl) = (0.7, 0.4, 3.0, 0.5);
        let a = titration_error(pa, pb, gz, dl);
        let b = a - (pa - pb) / dl;
        assert!((pa - gz * a * b - dl * a).abs() < 1e-12);
    }

    #[test]
    fn integral_only_is_bit_identical_to_aggregate() {
        let p = nominal();
        let r = ReferenceSignal::step(0.0, 1.3, 10.0);
        let c = compose_controller(&[Branch::Integral], &p, r.clone(), ControllerConfig::default()).unwrap();
        assert_eq!(c.dim(), STATE_DIM);
        let mut rng = 12345u64;
        for _ in 0..200 {
            let mut y = [0.0; STATE_DIM];
            for v in y.iter_mut() {
                rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *v = (rng >> 11) as f64 / (1u64 << 53) as f64 * 3.0;
            }
            let t = (rng % 40) as f64;
            let mut a = [0.0; STATE_DIM];
            let mut b = [0.0; STATE_DIM];
            c.rhs(t, &y, &mut a);
            closed_loop_rhs_slice(&p, r.value_at(t), &y, &mut b, LoopMode::Closed);
            for i in 0..STATE_DIM {
                assert_eq!(a[i].to_bits(), b[i].to_bits(), "slot {i}");
            }
        }
    }

    #[test]
    fn default_densities_share_controller_biomass() {
        let p = nominal();
        let c = ComposedController::new(ControllerKind::PID, p, ReferenceSignal::constant(1.0), ControllerConfig::default())
            .unwrap();
        let total = c.density(Branch::Integral) + c.density(Branch::Proportional) + c.density(Branch::Derivative);
        assert!((total - p.n_c).abs() < 1e-15);
        assert_eq!(c.dim(), STATE_DIM + 7);
    }

    proptest! {
        #[test]
        fn branch_fluxes_add_up_exactly(y in prop::collection::vec(0.0f64..3.0, STATE_DIM + 7), t in 0.0f64..100.0) {
            let c = ComposedController::new(
                ControllerKind::PID,
                nominal(),
                ReferenceSignal::constant(1.0),
                ControllerConfig::default(),
            ).unwrap();
            let mut dy = vec![0.0; c.dim()];
            c.rhs(t, &y, &mut dy);
            let flux = c.flux_breakdown(&y);
            let sum = flux.control[0].1 + flux.control[1].1 + flux.control[2].1;
            prop_assert_eq!(flux.branch_sum(), sum);
            prop_assert_eq!(dy[idx::QU_E], sum + flux.target - flux.degradation);
        }
    }
}
