use proptest::prelude::*;

use consortia::aggregate::{
    find_steady_state, find_steady_state_mode, initial_state, integrate, rpa_setpoint, InitialCondition,
};
use consortia::harness::run::open_loop_params;
use consortia::model::LoopMode;
use consortia::ode::IntegratorConfig;
use consortia::{AggregateState, ConsortiumParams, ReferenceSignal};

fn scaled(factors: &[(&str, f64)]) -> ConsortiumParams {
    let mut p = ConsortiumParams::nominal();
    for (name, f) in factors {
        let v = p.get(name).unwrap();
        p.set(name, v * f).unwrap();
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // The worst ±20% corner of the target side sits at about 1.01%, so
    // random interior draws stay below 1.1%.
    #[test]
    fn setpoint_is_robust_to_the_target_population(
        a in 0.8..1.2f64, k in 0.8..1.2f64, n in 0.8..1.2f64, b in 0.8..1.2f64, yd in 0.5..2.0f64,
    ) {
        let p = scaled(&[("alpha_max", a), ("k_u", k), ("n_u", n), ("beta_x", b)]);
        let s = find_steady_state(&p, yd, &AggregateState::ZERO).unwrap();
        let sp = rpa_setpoint(&p, yd).unwrap();
        prop_assert!((s.qx_i - sp).abs() / sp < 0.011, "{} vs {}", s.qx_i, sp);
    }

    #[test]
    fn trajectories_stay_non_negative(
        mu in 0.7..1.3f64, theta in 0.7..1.3f64, gz in 0.7..1.3f64, eta in 0.7..1.3f64, after in 0.0..3.0f64,
    ) {
        let p = scaled(&[("mu", mu), ("theta", theta), ("gamma_z", gz), ("eta", eta)]);
        let init = initial_state(&p, LoopMode::Closed, InitialCondition::Zero).unwrap();
        let cfg = IntegratorConfig { horizon: 300.0, output_dt: 5.0, ..Default::default() };
        let tr = integrate(&p, &ReferenceSignal::step(0.0, after, 30.0), &init, &cfg).unwrap();
        prop_assert!(tr.check().is_ok());
        prop_assert!(tr.states.iter().all(|s| s.to_array().iter().all(|v| *v >= 0.0 && v.is_finite())));
    }
}

#[test]
fn integration_settles_onto_the_newton_steady_state() {
    let p = ConsortiumParams::nominal();
    let init = initial_state(&p, LoopMode::Closed, InitialCondition::Basal).unwrap();
    let cfg = IntegratorConfig {
        horizon: 5000.0,
        output_dt: 50.0,
        ..Default::default()
    };
    let tr = integrate(&p, &ReferenceSignal::constant(1.0), &init, &cfg).unwrap();
    let ss = find_steady_state(&p, 1.0, &AggregateState::ZERO).unwrap();
    let end = tr.final_state();
    assert!((end.xc - ss.xc).abs() < 1e-3 * ss.xc, "{} vs {}", end.xc, ss.xc);
    assert!((end.qx_i - ss.qx_i).abs() < 1e-3 * ss.qx_i);
}

#[test]
fn open_loop_matches_only_at_its_calibration_point() {
    let p = ConsortiumParams::nominal();
    let open = open_loop_params(&p, 1.0).unwrap();
    let closed = find_steady_state(&p, 1.0, &AggregateState::ZERO).unwrap();
    let ol = find_steady_state_mode(&open, 1.0, &AggregateState::ZERO, LoopMode::Open).unwrap();
    assert!((ol.xc - closed.xc).abs() < 1e-6 * closed.xc);

    // A weaker target population shifts the open loop far more.
    let weak = ConsortiumParams {
        alpha_max: 0.7 * p.alpha_max,
        ..p
    };
    let weak_open = ConsortiumParams {
        alpha_max: 0.7 * p.alpha_max,
        ..open
    };
    let c = find_steady_state(&weak, 1.0, &AggregateState::ZERO).unwrap().xc;
    let o = find_steady_state_mode(&weak_open, 1.0, &AggregateState::ZERO, LoopMode::Open).unwrap().xc;
    let (dc, dopen) = ((c - closed.xc).abs() / closed.xc, (o - closed.xc).abs() / closed.xc);
    assert!(dc < 0.05 && dopen > 3.0 * dc, "closed {dc}, open {dopen}");
}
