//! Ratio excursion of bang-bang dilution control against actuation spread.
use consortia::composition::growth::crossing;
use consortia::composition::{simulate, CompositionController, Measurement, ReactorConfig};

fn main() {
    let s_in: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(10.0);
    let cfg = ReactorConfig { s_in, ..Default::default() };
    let (sx, dx) = crossing(&cfg.strain1, &cfg.strain2).unwrap();
    let half = 0.5 * cfg.strain1.yield_coeff * (s_in - sx);
    let mut init = cfg.initial_state(0.6 * half, 1.4 * half);
    init.s = sx;
    if std::env::args().nth(2).is_some() {
        let ctrl = CompositionController { lower: dx - 0.001, upper: dx + 0.001, ..Default::default() };
        let tr = simulate(&cfg, &ctrl, &Measurement::default(), &init, 12000.0).unwrap();
        for s in tr.samples.iter().filter(|s| s.t >= 6000.0 && s.t <= 7500.0) {
            println!("{:.0} D {:.4} r {:.4} n1 {:.3} n2 {:.3} s {:.4}", s.t, s.dilution, s.ratio, s.n1, s.n2, s.s);
        }
        return;
    }
    for delta in [0.0003, 0.0005, 0.0007, 0.001, 0.0015] {
        for period in [5.0, 15.0] {
            let ctrl = CompositionController { lower: dx - delta, upper: dx + delta, ..Default::default() };
            let meas = Measurement { period, ..Default::default() };
            let tr = simulate(&cfg, &ctrl, &meas, &init, 12000.0).unwrap();
            let first = tr.samples.iter().find(|s| (s.ratio - 0.5).abs() < 0.05).map(|s| s.t).unwrap_or(f64::NAN);
            println!(
                "delta {delta} period {period}: entry {first:.0} min, max err after 50h {:.4}, switches/h {:.3}",
                tr.max_ratio_error(0.5, 1200.0),
                tr.switches_per_hour()
            );
        }
    }
}

#[allow(dead_code)]
fn dump() {}
