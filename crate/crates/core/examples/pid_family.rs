//! Step responses of the controller family on a proportional-gain grid.

use consortia::controller::{BranchDensities, ComposedController, ControllerConfig, ControllerKind};
use consortia::metrics;
use consortia::model::{ConsortiumParams, ReferenceSignal};
use consortia::ode::{self, IntegratorConfig};

fn step(kind: ControllerKind, cfg: ControllerConfig, p: &ConsortiumParams) -> (f64, f64, f64, f64) {
    let pre = ComposedController::new(kind, *p, ReferenceSignal::constant(0.0), cfg).unwrap();
    let settle = IntegratorConfig::adaptive(1e-9, 1e-12, 6000.0).with_output_dt(6000.0);
    let y0 = ode::solve(&pre, 0.0, &pre.zero_state(), &settle).unwrap().last().to_vec();
    let c = ComposedController::new(kind, *p, ReferenceSignal::constant(1.0), cfg).unwrap();
    let sol = ode::solve(&c, 0.0, &y0, &IntegratorConfig::adaptive(1e-9, 1e-12, 3000.0)).unwrap();
    let xc = sol.component(5);
    let qx = *sol.component(8).last().unwrap();
    (
        metrics::settling_time(&sol.t, &xc, 0.0).unwrap() / 60.0,
        100.0 * metrics::overshoot(&sol.t, &xc, 0.0).unwrap(),
        *xc.last().unwrap(),
        metrics::steady_state_error_pct(qx, p.mu / p.theta),
    )
}

fn main() {
    let p = ConsortiumParams::nominal();
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut cfg = ControllerConfig::default();
    if let [kh, n, kd, kdh, basal, kf, ks, dec, ..] = args[..] {
        cfg.proportional.k_half = kh;
        cfg.proportional.n = n;
        cfg.derivative.k_d = kd;
        cfg.derivative.k_half = kdh;
        cfg.derivative.basal = basal;
        cfg.derivative.k_fast = kf;
        cfg.derivative.k_slow = ks;
        cfg.comparator_decay = dec;
    }
    cfg.densities = BranchDensities {
        integral: Some(p.n_c),
        proportional: Some(p.n_c),
        derivative: Some(p.n_c),
    };
    let (ts, os, x, e) = step(ControllerKind::I, cfg, &p);
    println!("I      settle {ts:.2} h  overshoot {os:.1}%  final {x:.4}  set-point error {e:.2}%");
    let grid: Vec<f64> = std::env::var("KP_GRID")
        .map(|g| g.split(',').map(|v| v.parse().unwrap()).collect())
        .unwrap_or_else(|_| vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5]);
    for kp in grid {
        cfg.proportional.k_p = kp;
        let pi = step(ControllerKind::PI, cfg, &p);
        let pp = step(ControllerKind::P, cfg, &p);
        let pd = step(ControllerKind::PD, cfg, &p);
        let pid = step(ControllerKind::PID, cfg, &p);
        println!(
            "k_p {kp:<6} PI {:.2} h {:.1}% {:.3} ({:.2}%) | P {:.2} h {:.2}% {:.3} | PD {:.2} h {:.2}% {:.3} | PID {:.2} h {:.1}% {:.3} ({:.2}%)",
            pi.0, pi.1, pi.2, pi.3, pp.0, pp.1, pp.2, pd.0, pd.1, pd.2, pid.0, pid.1, pid.2, pid.3
        );
    }
}
