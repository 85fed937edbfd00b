//! Dynamic range of target output against colony separation.
use consortia::agent::{run_recording, Boundaries, Placement, World, WorldConfig};
use consortia::{ConsortiumParams, ReferenceSignal};

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|s| s.parse().unwrap()).collect();
    let high = args.first().copied().unwrap_or(10.0);
    let dt = args.get(1).copied().unwrap_or(0.02);
    let horizon = args.get(2).copied().unwrap_or(600.0);
    let n = args.get(3).copied().unwrap_or(63.0) as usize;
    let p = ConsortiumParams::nominal();
    for d in [0.0, 50.0, 100.0, 150.0, 200.0] {
        let mut out = Vec::new();
        for yd in [0.0, 1.0, high] {
            let cfg = WorldConfig {
                width: 400.0,
                height: 100.0,
                grid_spacing: 10.0,
                boundaries: Boundaries::no_flux(),
                dt,
                mechanics: false,
                placement: Placement::Separated { controllers: n, targets: n, distance: d, radius: 20.0 },
                ..Default::default()
            };
            let t0 = std::time::Instant::now();
            let mut w = World::new(cfg, p, ReferenceSignal::constant(yd)).unwrap();
            let s = run_recording(&mut w, horizon, 10.0).unwrap();
            let last = s.last().unwrap().mean_xc;
            let prev = s[s.len() * 9 / 10].mean_xc;
            out.push((last, (last - prev).abs() / last, t0.elapsed().as_secs_f64()));
        }
        println!(
            "d {d:5} basal {:.4} yd1 {:.4} (drift {:.1e}) high {:.4} (drift {:.1e}) range {:.4}  [{:.1}s]",
            out[0].0, out[1].0, out[1].1, out[2].0, out[2].1, out[2].0 - out[0].0, out[2].2
        );
    }
}
