//! Explicit ODE integrators: fixed-step RK4, Dormand–Prince 5(4) with step
//! control, and a semi-implicit split for systems with a stiff sequestration
//! pair.
//!
//! All methods enforce the same non-negativity policy: after each accepted
//! step, components in [−10⁻⁹, 0) are clamped to zero and anything below
//! that band is an error (the adaptive method first retries with a smaller
//! step).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute clamp band for round-off negativity.
pub const NEGATIVITY_BAND: f64 = 1e-9;

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// The mutually annihilating pair, for [`Method::SemiImplicit`].
    fn stiff_pair(&self, _t: f64, _y: &[f64]) -> Option<StiffPair> {
        None
    }

    /// Components that may legitimately go negative (none by default).
    fn signed(&self, _i: usize) -> bool {
        false
    }
}

/// z₁' = a − k z₁z₂ − g z₁, z₂' = b − k z₁z₂ − g z₂ at slots `i1`, `i2`.
#[derive(Debug, Clone, Copy)]
pub struct StiffPair {
    pub i1: usize,
    pub i2: usize,
    pub prod1: f64,
    pub prod2: f64,
    pub gamma: f64,
    pub gamma_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    #[default]
    Adaptive,
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step for the fixed-step methods; initial step for the adaptive one (min).
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// End time (min).
    pub horizon: f64,
    /// Spacing of recorded samples (min).
    pub output_dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Adaptive,
            dt: 0.05,
            rtol: 1e-8,
            atol: 1e-10,
            max_step: 5.0,
            horizon: 1440.0,
            output_dt: 1.0,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, horizon: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            dt,
            horizon,
            ..Default::default()
        }
    }

    pub fn adaptive(rtol: f64, atol: f64, horizon: f64) -> Self {
        IntegratorConfig {
            method: Method::Adaptive,
            rtol,
            atol,
            horizon,
            ..Default::default()
        }
    }

    pub fn with_output_dt(mut self, output_dt: f64) -> Self {
        self.output_dt = output_dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(format!("integrator.{name}"), format!("must be positive, got {v}")))
            }
        };
        pos("dt", self.dt)?;
        pos("rtol", self.rtol)?;
        pos("atol", self.atol)?;
        pos("max_step", self.max_step)?;
        pos("output_dt", self.output_dt)?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::validation("integrator.horizon", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Sample times t0, t0 + output_dt, ..., horizon.
    pub fn output_times(&self, t0: f64) -> Vec<f64> {
        let mut out = vec![t0];
        let mut k = 1u64;
        loop {
            let t = t0 + k as f64 * self.output_dt;
            if t >= self.horizon - 1e-9 * self.output_dt {
                break;
            }
            out.push(t);
            k += 1;
        }
        if self.horizon > t0 {
            out.push(self.horizon);
        }
        out
    }
}

/// Samples of a solution on the output grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub dim: usize,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    /// Accepted internal steps.
    pub steps: usize,
    pub rejected: usize,
}

impl Solution {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.y[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.len() - 1)
    }

    pub fn component(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.y[i * self.dim + j]).collect()
    }
}

/// Integrates `sys` from `(t0, y0)` to `cfg.horizon`, sampling every
/// `cfg.output_dt`.
pub fn solve<S: OdeSystem + ?Sized>(sys: &S, t0: f64, y0: &[f64], cfg: &IntegratorConfig) -> Result<Solution> {
    cfg.validate()?;
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::Contract(format!("initial state has {} components, system has {n}", y0.len())));
    }
    let times = cfg.output_times(t0);
    let mut sol = Solution {
        dim: n,
        t: Vec::with_capacity(times.len()),
        y: Vec::with_capacity(times.len() * n),
        steps: 0,
        rejected: 0,
    };
    let mut y = y0.to_vec();
    enforce_sign(sys, t0, &mut y)?;
    sol.t.push(t0);
    sol.y.extend_from_slice(&y);
    let mut ws = Workspace::new(n);
    let mut h = cfg.dt.min(cfg.max_step);
    for w in times.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        match cfg.method {
            Method::Rk4 | Method::SemiImplicit => {
                let span = tb - ta;
                let m = ((span / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
                let hs = span / m as f64;
                for k in 0..m {
                    let t = ta + k as f64 * hs;
                    if cfg.method == Method::Rk4 {
                        rk4_step_sys(sys, t, &mut y, hs, &mut ws);
                    } else {
                        split_step(sys, t, &mut y, hs, &mut ws);
                    }
                    enforce_sign(sys, t + hs, &mut y)?;
                    sol.steps += 1;
                }
            }
            Method::Adaptive => {
                dopri_segment(sys, ta, tb, &mut y, &mut h, cfg, &mut ws, &mut sol)?;
            }
        }
        sol.t.push(tb);
        sol.y.extend_from_slice(&y);
    }
    Ok(sol)
}

fn enforce_sign<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &mut [f64]) -> Result<()> {
    for (i, v) in y.iter_mut().enumerate() {
        if *v < 0.0 && !sys.signed(i) {
            if *v >= -NEGATIVITY_BAND {
                *v = 0.0;
            } else {
                return Err(Error::Negativity { t, index: i, value: *v });
            }
        }
        if !v.is_finite() {
            return Err(Error::Stiffness { t, h: f64::NAN });
        }
    }
    Ok(())
}

fn first_bad<S: OdeSystem + ?Sized>(sys: &S, y: &[f64]) -> Option<(usize, f64)> {
    y.iter()
        .enumerate()
        .find(|(i, v)| !v.is_finite() || (**v < -NEGATIVITY_BAND && !sys.signed(*i)))
        .map(|(i, v)| (i, *v))
}

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    ynew: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            ynew: vec![0.0; n],
        }
    }
}

fn rk4_step_sys<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &mut [f64], h: f64, ws: &mut Workspace) {
    rk4_generic(|t, y, dy| sys.rhs(t, y, dy), t, y, h, ws);
}

fn rk4_generic<F: Fn(f64, &[f64], &mut [f64])>(f: F, t: f64, y: &mut [f64], h: f64, ws: &mut Workspace) {
    let n = y.len();
    let [k1, k2, k3, k4, ..] = &mut ws.k;
    let tmp = &mut ws.tmp;
    f(t, y, k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, tmp, k4);
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// One classical RK4 step of `f` with caller-owned scratch buffers; used by
/// the agent engine for per-cell updates.
pub fn rk4_step<F: Fn(f64, &[f64], &mut [f64])>(f: F, t: f64, y: &mut [f64], h: f64, scratch: &mut Rk4Scratch) {
    let n = y.len();
    scratch.ensure(n);
    let Rk4Scratch { k1, k2, k3, k4, tmp } = scratch;
    f(t, y, &mut k1[..n]);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp[..n], &mut k2[..n]);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp[..n], &mut k3[..n]);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, &tmp[..n], &mut k4[..n]);
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

#[derive(Debug, Default, Clone)]
pub struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn ensure(&mut self, n: usize) {
        if self.k1.len() < n {
            for v in [&mut self.k1, &mut self.k2, &mut self.k3, &mut self.k4, &mut self.tmp] {
                v.resize(n, 0.0);
            }
        }
    }
}

/// Backward-Euler update of the annihilating pair over `h` with the
/// production rates frozen. Both roots are computed in the cancellation-free
/// form, so the result is non-negative whenever the inputs are.
pub fn implicit_pair_step(z1: f64, z2: f64, pair: &StiffPair, h: f64) -> (f64, f64) {
    let one = 1.0 + h * pair.gamma;
    let a = h * pair.gamma_z;
    let c1 = z1 + h * pair.prod1;
    let c2 = z2 + h * pair.prod2;
    // z1n - z2n is fixed by the linear part.
    let d = (c1 - c2) / one;
    let root = |c: f64, d: f64| {
        let b = one - a * d;
        2.0 * c / (b + (b * b + 4.0 * a * c).sqrt())
    };
    let z1n = if c1 > 0.0 { root(c1, d) } else { 0.0 };
    let z2n = if c2 > 0.0 { root(c2, -d) } else { 0.0 };
    (z1n, z2n)
}

fn split_step<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &mut [f64], h: f64, ws: &mut Workspace) {
    let Some(pair) = sys.stiff_pair(t, y) else {
        rk4_step_sys(sys, t, y, h, ws);
        return;
    };
    let (a, b) = implicit_pair_step(y[pair.i1], y[pair.i2], &pair, 0.5 * h);
    y[pair.i1] = a;
    y[pair.i2] = b;
    let (i1, i2) = (pair.i1, pair.i2);
    rk4_generic(
        |t, y, dy| {
            sys.rhs(t, y, dy);
            dy[i1] = 0.0;
            dy[i2] = 0.0;
        },
        t,
        y,
        h,
        ws,
    );
    if let Some(pair) = sys.stiff_pair(t + h, y) {
        let (a, b) = implicit_pair_step(y[pair.i1], y[pair.i2], &pair, 0.5 * h);
        y[pair.i1] = a;
        y[pair.i2] = b;
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
fn dopri_segment<S: OdeSystem + ?Sized>(
    sys: &S,
    ta: f64,
    tb: f64,
    y: &mut [f64],
    h: &mut f64,
    cfg: &IntegratorConfig,
    ws: &mut Workspace,
    sol: &mut Solution,
) -> Result<()> {
    let n = y.len();
    let mut t = ta;
    let h_floor = |t: f64| 1e-12 * t.abs().max(1.0);
    while t < tb {
        let remaining = tb - t;
        let mut step = h.min(cfg.max_step);
        let landing = step >= remaining * (1.0 - 1e-12);
        if landing {
            step = remaining;
        }
        if step < h_floor(t) && !landing {
            return Err(Error::Stiffness { t, h: step });
        }
        sys.rhs(t, y, &mut ws.k[0]);
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s].iter().enumerate().take(s) {
                    acc += a * ws.k[j][i];
                }
                ws.tmp[i] = y[i] + step * acc;
            }
            sys.rhs(t + C[s] * step, &ws.tmp, &mut ws.k[s]);
        }
        // The 7th stage argument is the 5th-order solution.
        ws.ynew.copy_from_slice(&ws.tmp);
        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (s, es) in E.iter().enumerate() {
                e += es * ws.k[s][i];
            }
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(ws.ynew[i].abs());
            let r = step * e / sc;
            err += r * r;
        }
        let err = (err / n as f64).sqrt();
        let bad = first_bad(sys, &ws.ynew);
        if err <= 1.0 && bad.is_none() {
            t = if landing { tb } else { t + step };
            y.copy_from_slice(&ws.ynew);
            enforce_sign(sys, t, y)?;
            sol.steps += 1;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !landing || fac < 1.0 {
                *h = step * fac;
            }
        } else {
            sol.rejected += 1;
            let fac = if bad.is_some() && err <= 1.0 {
                0.25
            } else {
                (0.9 * err.powf(-0.25)).clamp(0.1, 0.9)
            };
            *h = step * fac;
            if *h < h_floor(t) {
                if let Some((index, value)) = bad {
                    return Err(Error::Negativity { t, index, value });
                }
                return Err(Error::Stiffness { t, h: *h });
            }
        }
        if sol.steps + sol.rejected > 50_000_000 {
            return Err(Error::Stiffness { t, h: *h });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = -self.0 * y[0];
        }
    }

    struct Oscillator;
    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
        fn signed(&self, _i: usize) -> bool {
            true
        }
    }

    struct Annihilation {
        a: f64,
        b: f64,
        k: f64,
        g: f64,
    }
    impl OdeSystem for Annihilation {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            let s = self.k * y[0] * y[1];
            dy[0] = self.a - s - self.g * y[0];
            dy[1] = self.b - s - self.g * y[1];
        }
        fn stiff_pair(&self, _t: f64, _y: &[f64]) -> Option<StiffPair> {
            Some(StiffPair {
                i1: 0,
                i2: 1,
                prod1: self.a,
                prod2: self.b,
                gamma: self.g,
                gamma_z: self.k,
            })
        }
    }

    #[test]
    fn output_grid_lands_on_horizon() {
        let cfg = IntegratorConfig::rk4(0.1, 2.5).with_output_dt(1.0);
        assert_eq!(cfg.output_times(0.0), vec![0.0, 1.0, 2.0, 2.5]);
        let cfg = IntegratorConfig::rk4(0.1, 3.0).with_output_dt(1.0);
        assert_eq!(cfg.output_times(0.0), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn adaptive_matches_exponential() {
        let sol = solve(&Decay(0.7), 0.0, &[2.0], &IntegratorConfig::adaptive(1e-10, 1e-12, 10.0)).unwrap();
        for (i, &t) in sol.t.iter().enumerate() {
            let exact = 2.0 * (-0.7 * t).exp();
            assert!((sol.row(i)[0] - exact).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let run = |dt: f64| {
            let sol = solve(&Oscillator, 0.0, &[1.0, 0.0], &IntegratorConfig::rk4(dt, 5.0).with_output_dt(5.0)).unwrap();
            (sol.last()[0] - 5f64.cos()).abs()
        };
        let (e1, e2) = (run(0.1), run(0.05));
        let order = (e1 / e2).log2();
        assert!(order > 3.8 && order < 4.3, "order {order}");
    }

    #[test]
    fn negativity_beyond_band_is_error() {
        struct Drain;
        impl OdeSystem for Drain {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, _y: &[f64], dy: &mut [f64]) {
                dy[0] = -1.0;
            }
        }
        let err = solve(&Drain, 0.0, &[0.5], &IntegratorConfig::rk4(0.1, 2.0)).unwrap_err();
        assert!(matches!(err, Error::Negativity { index: 0, .. }));
        let err = solve(&Drain, 0.0, &[0.5], &IntegratorConfig::adaptive(1e-6, 1e-9, 2.0)).unwrap_err();
        assert!(matches!(err, Error::Negativity { .. } | Error::Stiffness { .. }));
    }

    #[test]
    fn implicit_pair_is_non_negative_and_consistent() {
        let sys = Annihilation {
            a: 2.0,
            b: 1.0,
            k: 1e6,
            g: 0.03,
        };
        let cfg = IntegratorConfig {
            method: Method::SemiImplicit,
            dt: 0.5,
            horizon: 200.0,
            output_dt: 10.0,
            ..Default::default()
        };
        let sol = solve(&sys, 0.0, &[0.0, 0.0], &cfg).unwrap();
        let y = sol.last();
        assert!(y[0] >= 0.0 && y[1] >= 0.0);
        // Difference z1 - z2 obeys d' = (a - b) - g d exactly.
        let d_exact = (2.0 - 1.0) / 0.03 * (1.0 - (-0.03f64 * 200.0).exp());
        assert!(((y[0] - y[1]) - d_exact).abs() / d_exact < 1e-3);
        let adaptive = solve(&sys, 0.0, &[0.0, 0.0], &IntegratorConfig::adaptive(1e-9, 1e-12, 200.0));
        if let Ok(ad) = adaptive {
            assert!((ad.last()[0] - y[0]).abs() / y[0] < 1e-3);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = IntegratorConfig {
            dt: 0.0,
            ..Default::default()
        };
        assert!(solve(&Decay(1.0), 0.0, &[1.0], &cfg).is_err());
    }
}
