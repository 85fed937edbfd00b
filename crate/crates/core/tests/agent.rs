use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use consortia::agent::cell::partition_count;
use consortia::agent::{divide, Boundaries, Cell, DivisionConfig, Field, Partition, Placement, Population, World, WorldConfig};
use consortia::aggregate::InitialCondition;
use consortia::{ConsortiumParams, ReferenceSignal};

fn random_field(nx: usize, ny: usize, seed: u64) -> Field {
    let mut f = Field::new(nx, ny, 10.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut f.data {
        *v = rng.random_range(0.0..5.0);
    }
    f
}

#[test]
fn closed_lattice_conserves_mass_over_ten_thousand_steps() {
    let theta = ConsortiumParams::nominal().diffusion;
    let mut f = random_field(40, 10, 1);
    let dt = 0.9 * Field::stability_limit(f.h, theta);
    let before = f.total();
    let mut scratch = Vec::new();
    for _ in 0..10_000 {
        f.diffuse(theta, 0.0, dt, &Boundaries::no_flux(), &mut scratch);
    }
    let rel = (f.total() - before).abs() / before;
    assert!(rel < 1e-12, "relative drift {rel:e}");
    // Ten thousand steps spread the field towards its mean.
    let mean = before / f.data.len() as f64;
    assert!(f.data.iter().all(|v| (v - mean).abs() < 0.5), "not relaxing");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn diffusion_preserves_mass_and_positivity(
        nx in 1usize..12,
        ny in 1usize..12,
        seed in any::<u64>(),
        frac in 0.05..1.0f64,
        steps in 1usize..200,
    ) {
        let theta = 2.0;
        let mut f = random_field(nx, ny, seed);
        let dt = frac * Field::stability_limit(f.h, theta);
        let before = f.total();
        let mut scratch = Vec::new();
        for _ in 0..steps {
            f.diffuse(theta, 0.0, dt, &Boundaries::no_flux(), &mut scratch);
        }
        prop_assert!((f.total() - before).abs() <= 1e-12 * before.max(1e-300));
        prop_assert!(f.data.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn open_edges_only_lose_mass(seed in any::<u64>(), steps in 1usize..100) {
        let mut f = random_field(8, 6, seed);
        let mut prev = f.total();
        let mut scratch = Vec::new();
        let dt = 0.5 * Field::stability_limit(f.h, 5.0);
        for _ in 0..steps {
            f.diffuse(5.0, 0.0, dt, &Boundaries::chamber(), &mut scratch);
            prop_assert!(f.total() <= prev + 1e-12 * prev);
            prev = f.total();
        }
    }
}

fn mother(length: f64, state: Vec<f64>) -> Cell {
    Cell {
        id: 1,
        tag: Population::Target,
        x: 50.0,
        y: 50.0,
        angle: 0.3,
        length,
        growth_rate: 0.0,
        division_length: length,
        params: ConsortiumParams::nominal(),
        state,
        parent: None,
        generation: 0,
    }
}

#[test]
fn binomial_partition_has_binomial_moments() {
    let n = 400.0;
    let f = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let draws: Vec<f64> = (0..20_000).map(|_| partition_count(n, f, Partition::Binomial, &mut rng).0).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    let (m0, v0) = (n * f, n * f * (1.0 - f));
    // Standard errors: sqrt(v0/N) for the mean, about v0*sqrt(2/N) for the variance.
    assert!((mean - m0).abs() < 4.0 * (v0 / 20_000.0).sqrt(), "mean {mean}");
    assert!((var - v0).abs() < 4.0 * v0 * (2.0f64 / 20_000.0).sqrt(), "var {var}");
}

#[test]
fn division_conserves_molecules_and_length() {
    let cfg = DivisionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut id = 10;
    for k in 0..500 {
        let len = 2.0 + 0.01 * k as f64;
        let counts = [37.0, 512.0, 3.0, 0.0, 1999.0];
        let v = mother(len, vec![0.0; 5]).volume();
        let state: Vec<f64> = counts.iter().map(|c| c / (v * cfg.molecules_per_unit)).collect();
        let m = mother(len, state);
        let (a, b) = divide(&m, &cfg, &mut id, &mut rng).unwrap();
        for (s, want) in counts.iter().enumerate() {
            let n1 = a.state[s] * a.volume() * cfg.molecules_per_unit;
            let n2 = b.state[s] * b.volume() * cfg.molecules_per_unit;
            assert!((n1 + n2 - want).abs() <= 1e-12 * want.max(1.0), "{n1} + {n2} != {want}");
        }
        assert!((a.length + b.length - m.length).abs() < 1e-12);
        assert_eq!((a.parent, b.parent), (Some(1), Some(1)));
    }
}

fn chamber(controllers: usize, targets: usize) -> WorldConfig {
    WorldConfig {
        width: 80.0,
        height: 40.0,
        dt: 0.05,
        growth_rate: 0.02,
        heterogeneity_cv: 0.2,
        placement: Placement::Mixed { controllers, targets },
        ..Default::default()
    }
}

#[test]
fn exchange_ledger_balances_in_a_growing_colony() {
    let mut w = World::new(chamber(40, 40), ConsortiumParams::nominal(), ReferenceSignal::step(0.0, 2.0, 5.0)).unwrap();
    for _ in 0..1000 {
        w.step().unwrap();
        assert!(w.ledger.last.iter().all(|r| *r < 1e-12), "{:?} at t = {}", w.ledger, w.t);
    }
    assert!(w.cells.len() > 80, "colony should grow");
    assert!(w.ledger.balanced(1e-12));
}

#[test]
fn transport_alone_preserves_qs_totals() {
    // With production, decay and growth switched off, exchange and diffusion
    // must leave the QS totals untouched.
    let mut p = ConsortiumParams::nominal();
    p.gamma_e = 0.0;
    p.gamma_q = 0.0;
    p.gamma = 0.0;
    p.beta_u = 0.0;
    p.beta_x = 0.0;
    let cfg = WorldConfig {
        boundaries: Boundaries::no_flux(),
        growth_rate: 0.0,
        heterogeneity_cv: 0.0,
        initial: InitialCondition::Zero,
        ..chamber(30, 30)
    };
    let mut w = World::new(cfg, p, ReferenceSignal::constant(0.0)).unwrap();
    w.qu.data.iter_mut().enumerate().for_each(|(k, v)| *v = (k % 7) as f64);
    w.qx.data.iter_mut().enumerate().for_each(|(k, v)| *v = (k % 3) as f64);
    let before = w.qs_totals();
    w.run_until(20.0).unwrap();
    let after = w.qs_totals();
    for k in 0..2 {
        assert!((after[k] - before[k]).abs() <= 1e-10 * before[k], "{before:?} -> {after:?}");
    }
}

#[test]
fn worlds_do_not_depend_on_thread_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut w = World::new(chamber(25, 25), ConsortiumParams::nominal(), ReferenceSignal::constant(1.0)).unwrap();
            w.run_until(40.0).unwrap();
            w
        })
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.cells, b.cells);
    assert_eq!(a.qu, b.qu);
    assert_eq!(a.qx, b.qx);
}

#[test]
fn different_seeds_give_different_colonies() {
    let run = |seed: u64| {
        let mut w = World::new(WorldConfig { seed, ..chamber(10, 10) }, ConsortiumParams::nominal(), ReferenceSignal::constant(1.0))
            .unwrap();
        w.run_until(10.0).unwrap();
        w.cells
    };
    assert_ne!(run(1), run(2));
}

#[test]
fn separated_colonies_start_in_their_discs() {
    let cfg = WorldConfig {
        width: 300.0,
        height: 100.0,
        boundaries: Boundaries::no_flux(),
        placement: Placement::Separated {
            controllers: 30,
            targets: 30,
            distance: 150.0,
            radius: 20.0,
        },
        mechanics: false,
        ..Default::default()
    };
    let w = World::new(cfg, ConsortiumParams::nominal(), ReferenceSignal::constant(1.0)).unwrap();
    let centre = |tag: Population| {
        let cs: Vec<_> = w.cells.iter().filter(|c| c.tag == tag).collect();
        (cs.iter().map(|c| c.x).sum::<f64>() / cs.len() as f64, cs.len())
    };
    let (xc, nc) = centre(Population::Controller);
    let (xt, nt) = centre(Population::Target);
    assert_eq!((nc, nt), (30, 30));
    assert!(((xt - xc) - 150.0).abs() < 15.0, "{xc} {xt}");
}
