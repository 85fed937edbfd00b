//! Dual-chamber steady ratio against transfer rate, and switching control.
use consortia::composition::*;

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|s| s.parse().unwrap()).collect();
    let d = args.first().copied().unwrap_or(0.008);
    let cfg = ReactorConfig {
        strain1: GrowthLaw::new(0.025, 0.2).with_yield(0.5),
        strain2: GrowthLaw::new(0.012, 0.5).with_yield(0.5),
        topology: Topology::Dual,
        dilution: d,
        ..Default::default()
    };
    let init = cfg.initial_state(1.0, 1.0);
    for u in [0.0, 0.0005, 0.001, 0.002, 0.003, 0.005, 0.008, 0.012] {
        let tr = simulate_constant(&cfg, u, &init, 60000.0).unwrap();
        let f = tr.final_state;
        println!("u {u}: r {:.4} n1 {:.3} n2 {:.3} biomass {:.3}", f.ratio(), f.n1, f.n2, f.biomass());
    }
    for (lo, hi) in [(0.003, 0.007), (0.004, 0.006), (0.002, 0.008)] {
        let ctrl = CompositionController { lower: lo, upper: hi, ..Default::default() };
        let tr = simulate(&cfg, &ctrl, &Measurement::default(), &cfg.initial_state(1.8, 0.2), 12000.0).unwrap();
        let entry = tr.samples.iter().find(|s| (s.ratio - 0.5).abs() < 0.025).map(|s| s.t);
        println!("bounds {lo}-{hi}: entry {entry:?} max err after 50h {:.4} switches/h {:.3}, min n2 {:.3}",
            tr.max_ratio_error(0.5, 3000.0), tr.switches_per_hour(),
            tr.samples.iter().map(|s| s.n2).fold(f64::INFINITY, f64::min));
    }
}
