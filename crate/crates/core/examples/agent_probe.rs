//! Well-mixed agent run against the aggregate model.
use consortia::agent::{run_recording, Boundaries, Placement, World, WorldConfig};
use consortia::aggregate::{initial_state, integrate, InitialCondition};
use consortia::model::rhs::LoopMode;
use consortia::ode::IntegratorConfig;
use consortia::{ConsortiumParams, ReferenceSignal};

fn main() {
    let dt: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let p = ConsortiumParams::nominal();
    let reference = ReferenceSignal::step(0.0, 1.0, 60.0);
    let cfg = WorldConfig {
        width: 100.0,
        height: 50.0,
        well_mixed: true,
        boundaries: Boundaries::no_flux(),
        dt,
        heterogeneity_cv: 0.0,
        mechanics: false,
        placement: Placement::Mixed { controllers: 250, targets: 250 },
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let mut w = World::new(cfg, p, reference.clone()).unwrap();
    let samples = run_recording(&mut w, 1200.0, 1.0).unwrap();
    let el = t0.elapsed();
    let init = initial_state(&p, LoopMode::Closed, InitialCondition::Basal).unwrap();
    let traj = integrate(&p, &reference, &init, &IntegratorConfig::default().with_output_dt(1.0)).unwrap();
    let agg = traj.xc();
    let peak = agg.iter().cloned().fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for s in &samples {
        let k = s.t.round() as usize;
        worst = worst.max((s.mean_xc - agg[k]).abs() / peak);
    }
    println!("dt {dt} samples {} runtime {:.1?} worst rel err {:.4}% ledger {:.2e}", samples.len(), el, 100.0 * worst, w.ledger.worst);
    for k in [0usize, 60, 120, 240, 480, 1200] {
        let s = samples.iter().find(|s| s.t.round() as usize == k).unwrap();
        println!("t {k} agent {:.5} aggregate {:.5}", s.mean_xc, agg[k]);
    }
}
