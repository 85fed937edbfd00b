//! Scenario drivers: single runs, Monte Carlo replicates, sweeps and the
//! closed/open comparison.

use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;

use super::config::{Compare, Engine, Format, Mode, MonteCarlo, Perturbation, Scenario};
use super::output::{metrics_table, save_plot, PlotSpec, Series, Table, Value};
use crate::agent::{self, export, AgentSample, Placement, World, WorldConfig};
use crate::aggregate::{
    feedforward_gain, find_steady_state_mode, initial_state, integrate, integrate_model, rpa_setpoint, AggregateModel,
    InitialCondition,
};
use crate::composition::{
    couple_composition, simulate, simulate_constant, simulate_coupled, CompositionController, Measurement,
    ReactorConfig, Topology, CompositionSample,
};
use crate::controller::{Branch, ComposedController, ControllerKind};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::model::state::STATE_NAMES;
use crate::model::{AggregateState, ConsortiumParams, LoopMode, ReferenceSignal};
use crate::ode::{self, IntegratorConfig};

/// Horizon of the Y_d = 0 pre-run that settles composed controllers.
const BASAL_SETTLE_MIN: f64 = 6000.0;

/// Relative change over the last tenth of a run below which it counts as
/// converged.
const CONVERGENCE_TOL: f64 = 0.01;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub format: Format,
    /// Worker threads; the global pool when `None`.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub metrics: Vec<MetricsReport>,
    pub warnings: Vec<String>,
}

/// Header of aggregate trajectories.csv.
pub fn trajectory_header() -> Vec<String> {
    let mut h = vec!["t".to_string(), "Yd".to_string()];
    h.extend(STATE_NAMES.iter().map(|s| s.to_string()));
    h
}

/// Sampled aggregate run of any controller composition.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRun {
    pub times: Vec<f64>,
    pub yd: Vec<f64>,
    pub states: Vec<AggregateState>,
}

impl AggregateRun {
    pub fn xc(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.xc).collect()
    }

    pub fn final_state(&self) -> AggregateState {
        *self.states.last().expect("run has at least one sample")
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&trajectory_header());
        for ((time, yd), s) in self.times.iter().zip(&self.yd).zip(&self.states) {
            let mut row: Vec<Value> = vec![(*time).into(), (*yd).into()];
            row.extend(s.to_array().iter().map(|v| Value::from(*v)));
            t.push(row);
        }
        t
    }

    pub fn converged(&self) -> bool {
        converged(&self.times, &self.xc())
    }
}

/// True when the last tenth of the series stays within 1% of its final
/// value (absolute floor 1e-9).
pub fn converged(times: &[f64], values: &[f64]) -> bool {
    tail_within(times, values, CONVERGENCE_TOL)
}

/// True when the series stays inside the ±5% settling band around its final
/// value over the last tenth of the run: the run has settled in the sense of
/// the settling-time metric, even if a small residual oscillation remains.
pub fn settled(times: &[f64], values: &[f64]) -> bool {
    tail_within(times, values, metrics::SETTLING_BAND)
}

fn tail_within(times: &[f64], values: &[f64], rel: f64) -> bool {
    let (Some(&t_end), Some(&last)) = (times.last(), values.last()) else {
        return false;
    };
    let from = times[0] + 0.9 * (t_end - times[0]);
    let tol = rel * last.abs() + 1e-9;
    last.is_finite()
        && times
            .iter()
            .zip(values)
            .filter(|(t, _)| **t >= from)
            .all(|(_, v)| (v - last).abs() <= tol)
}

/// Reference level used to calibrate the open loop's feed-forward gain.
fn calibration_level(reference: &ReferenceSignal) -> Result<f64> {
    let yd = reference.peak();
    if yd > 0.0 {
        Ok(yd)
    } else {
        Err(Error::validation("reference", "the open loop needs a positive reference to calibrate against"))
    }
}

/// Open-loop parameters whose feed-forward gain reproduces the closed loop
/// of `nominal` at `yd`.
pub fn open_loop_params(nominal: &ConsortiumParams, yd: f64) -> Result<ConsortiumParams> {
    Ok(nominal.open_loop(feedforward_gain(nominal, yd)?))
}

/// Integrates one aggregate run. `open` carries the already calibrated
/// open-loop parameters when `mode` is open.
pub fn simulate_aggregate(
    s: &Scenario,
    p: &ConsortiumParams,
    mode: Mode,
    reference: &ReferenceSignal,
) -> Result<AggregateRun> {
    let kind = s.controller_kind();
    let integ = &s.integrator;
    match (kind, mode) {
        (ControllerKind::I, Mode::Closed) => {
            let init = initial_state(p, LoopMode::Closed, s.initial)?;
            let tr = integrate(p, reference, &init, integ)?;
            Ok(AggregateRun {
                times: tr.times,
                yd: tr.reference,
                states: tr.states,
            })
        }
        (ControllerKind::I, Mode::Open) => {
            let q = open_loop_params(p, calibration_level(reference)?)?;
            run_open(&q, reference, s.initial, integ)
        }
        (_, Mode::Open) => Err(Error::validation("mode", "the open loop is defined for the integral controller only")),
        (kind, Mode::Closed) => {
            let cfg = s.controller_config.unwrap_or_default();
            let c = ComposedController::new(kind, *p, reference.clone(), cfg)?;
            let y0 = match s.initial {
                InitialCondition::Zero => c.zero_state(),
                InitialCondition::Basal => {
                    let pre = ComposedController::new(kind, *p, ReferenceSignal::constant(0.0), cfg)?;
                    let settle = IntegratorConfig {
                        horizon: BASAL_SETTLE_MIN,
                        output_dt: BASAL_SETTLE_MIN,
                        ..*integ
                    };
                    ode::solve(&pre, 0.0, &pre.zero_state(), &settle)?.last().to_vec()
                }
            };
            let sol = ode::solve(&c, 0.0, &y0, integ)?;
            Ok(AggregateRun {
                yd: sol.t.iter().map(|&t| reference.value_at(t)).collect(),
                states: (0..sol.len()).map(|i| AggregateState::from_slice(&sol.row(i)[..9])).collect(),
                times: sol.t,
            })
        }
    }
}

/// Open loop with pre-calibrated parameters.
fn run_open(
    q: &ConsortiumParams,
    reference: &ReferenceSignal,
    ic: InitialCondition,
    integ: &IntegratorConfig,
) -> Result<AggregateRun> {
    let init = initial_state(q, LoopMode::Open, ic)?;
    let tr = integrate_model(&AggregateModel::open(*q, reference.clone()), &init, integ)?;
    Ok(AggregateRun {
        times: tr.times,
        yd: tr.reference,
        states: tr.states,
    })
}

/// Metrics of one aggregate run.
pub fn aggregate_report(
    label: &str,
    run: &AggregateRun,
    p: &ConsortiumParams,
    kind: ControllerKind,
    mode: Mode,
    origin: f64,
) -> Result<MetricsReport> {
    let xc = run.xc();
    let last = run.final_state();
    let yd = *run.yd.last().expect("non-empty run");
    let setpoint = (mode == Mode::Closed && kind.has(Branch::Integral))
        .then(|| rpa_setpoint(p, yd))
        .transpose()?;
    Ok(MetricsReport {
        label: label.into(),
        settling_time_min: Some(metrics::settling_time(&run.times, &xc, origin)?),
        overshoot_pct: Some(100.0 * metrics::overshoot(&run.times, &xc, origin)?),
        steady_state_error_pct: setpoint.map(|sp| metrics::steady_state_error_pct(last.qx_i, sp)),
        rmse: Some(metrics::rmse(&xc, &run.yd)?),
        cv: None,
        r_squared: None,
        dynamic_range: None,
        final_xc: Some(last.xc),
    })
}

/// Blanks metrics the scenario did not ask for.
fn select(s: &Scenario, mut r: MetricsReport) -> MetricsReport {
    let keep = |name: &str, v: Option<f64>| if s.metric_enabled(name) { v } else { None };
    r.settling_time_min = keep("settling_time", r.settling_time_min);
    r.overshoot_pct = keep("overshoot", r.overshoot_pct);
    r.steady_state_error_pct = keep("steady_state_error", r.steady_state_error_pct);
    r.rmse = keep("rmse", r.rmse);
    r.cv = keep("cv", r.cv);
    r.r_squared = keep("r_squared", r.r_squared);
    r.dynamic_range = keep("dynamic_range", r.dynamic_range);
    r.final_xc = keep("final_xc", r.final_xc);
    r
}

/// Steady state of an aggregate loop at constant `yd`: integrates from the
/// scenario's initial condition, then polishes with Newton from the end
/// point (integral controller only). Returns the state and whether the run
/// converged.
pub fn aggregate_steady(
    s: &Scenario,
    p: &ConsortiumParams,
    mode: Mode,
    yd: f64,
    open: Option<&ConsortiumParams>,
) -> Result<(AggregateState, bool)> {
    let reference = ReferenceSignal::constant(yd);
    let run = match (mode, open) {
        (Mode::Open, Some(q)) => run_open(q, &reference, s.initial, &s.integrator)?,
        _ => simulate_aggregate(s, p, mode, &reference)?,
    };
    let end = run.final_state();
    let ok = run.converged();
    if s.controller_kind() != ControllerKind::I {
        return Ok((end, ok));
    }
    let (q, lm) = match mode {
        Mode::Closed => (*p, LoopMode::Closed),
        Mode::Open => (*open.expect("open-loop parameters"), LoopMode::Open),
    };
    match find_steady_state_mode(&q, yd, &end, lm) {
        Ok(ss) if (ss.xc - end.xc).abs() <= CONVERGENCE_TOL * end.xc.abs() + 1e-9 => Ok((ss, ok)),
        _ => Ok((end, false)),
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn scenario_error(s: &Scenario, e: Error) -> Error {
    match e {
        Error::Scenario { .. } => e,
        e => Error::Scenario {
            scenario: s.name.clone(),
            source: Box::new(e),
        },
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs whatever the scenario describes: Monte Carlo, comparison, sweep or
/// a single run, in that order of precedence.
pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    s.validate()?;
    if s.monte_carlo.is_some() {
        run_monte_carlo(s, opts)
    } else if s.compare.is_some() {
        run_compare(s, opts)
    } else if s.sweep.is_some() {
        run_sweep(s, opts)
    } else {
        run_single(s, opts)
    }
}

/// One run of the scenario's engine.
pub fn run_single(s: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    s.validate()?;
    prepare_dir(&opts.out_dir)?;
    let out = match s.engine {
        Engine::Aggregate => single_aggregate(s, opts),
        Engine::Agent => single_agent(s, opts),
        Engine::Composition => single_composition(s, opts),
        Engine::Coupled => single_coupled(s, opts),
    };
    out.map_err(|e| scenario_error(s, e))
}

fn finish(s: &Scenario, opts: &RunOptions, mut out: RunOutput) -> Result<RunOutput> {
    if opts.format.csv() {
        let reports: Vec<MetricsReport> = out.metrics.iter().cloned().map(|r| select(s, r)).collect();
        out.files.push(metrics_table(&reports).save(&opts.out_dir.join("metrics.csv"))?);
    }
    Ok(out)
}

fn single_aggregate(s: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    let p = s.parameters()?;
    let run = simulate_aggregate(s, &p, s.mode, &s.reference)?;
    let label = match s.mode {
        Mode::Closed => "closed",
        Mode::Open => "open",
    };
    let report = aggregate_report(label, &run, &p, s.controller_kind(), s.mode, s.reference.last_event())?;
    let mut out = RunOutput {
        metrics: vec![report],
        ..Default::default()
    };
    write_aggregate_run(s, opts, &run, &mut out)?;
    finish(s, opts, out)
}

fn write_aggregate_run(s: &Scenario, opts: &RunOptions, run: &AggregateRun, out: &mut RunOutput) -> Result<()> {
    if opts.format.csv() {
        out.files.push(run.table().save(&opts.out_dir.join("trajectories.csv"))?);
    }
    if opts.format.svg() {
        let spec = PlotSpec::new(&format!("{}: step response", s.name), "time (min)", "concentration")
            .with(Series::line("Yd", run.times.clone(), run.yd.clone()))
            .with(Series::line("Xc", run.times.clone(), run.xc()));
        out.files.push(save_plot(&spec, &opts.out_dir.join("trajectories.svg"))?);
    }
    Ok(())
}

/// Agent world configured by the scenario; the scenario seed governs the
/// world's random streams.
pub fn agent_world(s: &Scenario, p: &ConsortiumParams, cfg: WorldConfig, reference: ReferenceSignal) -> Result<World> {
    World::new(WorldConfig { seed: s.seed, ..cfg }, *p, reference)
}

fn agent_table(samples: &[AgentSample]) -> Table {
    let mut t = Table::new(&AgentSample::HEADER);
    for a in samples {
        t.push(vec![
            a.t.into(),
            a.controllers.into(),
            a.targets.into(),
            a.yd.into(),
            a.mean_xc.into(),
            a.cv_xc.into(),
            a.mean_qu_e.into(),
            a.mean_qx_e.into(),
        ]);
    }
    t
}

fn single_agent(s: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    let p = s.parameters()?;
    let mut world = agent_world(s, &p, s.agent.unwrap_or_default(), s.reference.clone())?;
    let samples = agent::run_recording(&mut world, s.integrator.horizon, s.integrator.output_dt)?;
    let times: Vec<f64> = samples.iter().map(|a| a.t).collect();
    let xc: Vec<f64> = samples.iter().map(|a| a.mean_xc).collect();
    let yd: Vec<f64> = samples.iter().map(|a| a.yd).collect();
    let last = samples.last().expect("recording has samples");
    let origin = s.reference.last_event();
    let report = MetricsReport {
        label: "agent".into(),
        settling_time_min: Some(metrics::settling_time(&times, &xc, origin)?),
        overshoot_pct: Some(100.0 * metrics::overshoot(&times, &xc, origin)?),
        steady_state_error_pct: None,
        rmse: Some(metrics::rmse(&xc, &yd)?),
        cv: Some(last.cv_xc),
        r_squared: None,
        dynamic_range: None,
        final_xc: Some(last.mean_xc),
    };
    let mut out = RunOutput {
        metrics: vec![report],
        warnings: world.warnings.clone(),
        ..Default::default()
    };
    let dir = &opts.out_dir;
    if opts.format.csv() {
        out.files.push(agent_table(&samples).save(&dir.join("trajectories.csv"))?);
        let path = dir.join("cells.csv");
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        export::write_cells_csv(&world, std::io::BufWriter::new(f))?;
        out.files.push(path);
        for (name, field) in [("lattice_qu.csv", &world.qu), ("lattice_qx.csv", &world.qx)] {
            let path = dir.join(name);
            let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            export::write_lattice_csv(field, std::io::BufWriter::new(f))?;
            out.files.push(path);
        }
    }
    if opts.format.svg() {
        let spec = PlotSpec::new(&format!("{}: population mean", s.name), "time (min)", "concentration")
            .with(Series::line("Yd", times.clone(), yd))
            .with(Series::line("mean Xc", times, xc));
        out.files.push(save_plot(&spec, &dir.join("trajectories.svg"))?);
        let path = dir.join("frame.svg");
        std::fs::write(&path, export::svg_frame(&world)).map_err(|e| Error::io(&path, e))?;
        out.files.push(path);
    }
    finish(s, opts, out)
}

/// Reactor settings with the scenario seed applied to the measurement noise.
fn reactor_setup(s: &Scenario) -> (ReactorConfig, CompositionController, Measurement) {
    let meas = Measurement {
        seed: s.seed,
        ..s.measurement.unwrap_or_default()
    };
    (s.reactor.unwrap_or_default(), s.composition.unwrap_or_default(), meas)
}

fn composition_table(samples: &[CompositionSample]) -> Table {
    let mut t = Table::new(&CompositionSample::HEADER);
    for c in samples {
        t.push(vec![
            c.t.into(),
            c.dilution.into(),
            c.transfer.into(),
            c.ratio.into(),
            c.n1.into(),
            c.n2.into(),
            c.s.into(),
        ]);
    }
    t
}

fn single_composition(s: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    let (cfg, ctrl, meas) = reactor_setup(s);
    let init = cfg.initial_state(0.5, 0.5);
    let trace = simulate(&cfg, &ctrl, &meas, &init, s.integrator.horizon)?;
    let times: Vec<f64> = trace.samples.iter().map(|c| c.t).collect();
    let ratios = trace.ratios();
    let target = vec![ctrl.target_ratio; ratios.len()];
    let from = 0.5 * s.integrator.horizon;
    let report = MetricsReport {
        label: "composition".into(),
        settling_time_min: metrics::settling_time(&times, &ratios, 0.0).ok(),
        overshoot_pct: None,
        steady_state_error_pct: Some(100.0 * trace.max_ratio_error(ctrl.target_ratio, from) / ctrl.target_ratio),
        rmse: Some(metrics::rmse(&ratios, &target)?),
        ..Default::default()
    };
    let mut out = RunOutput {
        metrics: vec![report],
        ..Default::default()
    };
    if opts.format.csv() {
        out.files.push(composition_table(&trace.samples).save(&opts.out_dir.join("trajectories.csv"))?);
    }
    if opts.format.svg() {
        let spec = PlotSpec::new(&format!("{}: composition", s.name), "time (min)", "strain-1 fraction")
            .with(Series::line("target", times.clone(), target))
            .with(Series::line("r", times, ratios));
        out.files.push(save_plot(&spec, &opts.out_dir.join("trajectories.svg"))?);
    }
    finish(s, opts, out)
}

fn single_coupled(s: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    let p = s.parameters()?;
    let (cfg, ctrl, meas) = reactor_setup(s);
    let model = couple_composition(p, s.reference.clone(), cfg, s.coupling.unwrap_or_default())?;
    let reactor0 = cfg.initial_state(0.5, 0.5);
    let agg0 = initial_state(&model.params_at(&reactor0.to_vec()), LoopMode::Closed, s.initial)?;
    let y0 = model.initial_state(&agg0, &reactor0);
    let controlled = s.composition.is_some().then_some(&ctrl);
    let tr = simulate_coupled(&model, controlled, &meas, &y0, s.integrator.horizon, &s.integrator)?;
    let xc = tr.xc();
    let yd: Vec<f64> = tr.times.iter().map(|&t| s.reference.value_at(t)).collect();
    let origin = s.reference.last_event();
    let report = MetricsReport {
        label: "coupled".into(),
        settling_time_min: Some(metrics::settling_time(&tr.times, &xc, origin)?),
        overshoot_pct: Some(100.0 * metrics::overshoot(&tr.times, &xc, origin)?),
        rmse: Some(metrics::rmse(&xc, &yd)?),
        final_xc: xc.last().copied(),
        ..Default::default()
    };
    let mut out = RunOutput {
        metrics: vec![report],
        ..Default::default()
    };
    if opts.format.csv() {
        let mut header = trajectory_header();
        header.extend(["n1", "n2", "s", "r", "D", "u"].map(String::from));
        let mut t = Table::new(&header);
        for (i, time) in tr.times.iter().enumerate() {
            let mut row: Vec<Value> = vec![(*time).into(), yd[i].into()];
            row.extend(tr.states[i].to_array().iter().map(|v| Value::from(*v)));
            let r = &tr.reactor[i];
            row.extend([r.n1, r.n2, r.s, r.ratio(), tr.dilution[i], tr.transfer[i]].map(Value::from));
            t.push(row);
        }
        out.files.push(t.save(&opts.out_dir.join("trajectories.csv"))?);
    }
    if opts.format.svg() {
        let spec = PlotSpec::new(&format!("{}: coupled run", s.name), "time (min)", "value")
            .with(Series::line("Yd", tr.times.clone(), yd))
            .with(Series::line("Xc", tr.times.clone(), xc))
            .with(Series::line("r", tr.times.clone(), tr.ratios()));
        out.files.push(save_plot(&spec, &opts.out_dir.join("trajectories.svg"))?);
    }
    finish(s, opts, out)
}

// ---------------------------------------------------------------------------
// Monte Carlo

/// Per-replicate sub-seeds drawn from one master stream.
pub fn replicate_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.next_u64()).collect()
}

/// Multiplies each named parameter by an independent factor drawn from the
/// replicate's stream. Hill coefficients are floored at 1.
pub fn perturb_params(
    base: &ConsortiumParams,
    names: &[String],
    magnitude: f64,
    distribution: Perturbation,
    seed: u64,
) -> Result<(ConsortiumParams, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lognormal = match distribution {
        Perturbation::LogNormal if magnitude > 0.0 => Some(
            LogNormal::from_mean_cv(1.0, magnitude).map_err(|e| Error::validation("magnitude", e.to_string()))?,
        ),
        _ => None,
    };
    let mut p = *base;
    let mut factors = Vec::with_capacity(names.len());
    for name in names {
        let f = match (&lognormal, magnitude > 0.0) {
            (Some(d), _) => d.sample(&mut rng),
            (None, true) => rng.random_range(1.0 - magnitude..=1.0 + magnitude),
            (None, false) => 1.0,
        };
        let v = base.get(name).ok_or_else(|| Error::validation("parameters", format!("unknown `{name}`")))? * f;
        p.set(name, if name == "n_u" { v.max(1.0) } else { v })?;
        factors.push(f);
    }
    if p.alpha_max < p.alpha_0 {
        p.alpha_max = p.alpha_0;
    }
    Ok((p, factors))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub index: usize,
    pub seed: u64,
    pub factors: Vec<f64>,
    pub params: ConsortiumParams,
    pub final_state: AggregateState,
    pub setpoint: Option<f64>,
    /// Stayed within the settling band over the last tenth of the horizon.
    pub settled: bool,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub names: Vec<String>,
    pub replicates: Vec<Replicate>,
    /// CV of final X_c across replicates.
    pub cv_xc: Option<f64>,
}

impl MonteCarloResult {
    pub fn all_settled(&self) -> bool {
        self.replicates.iter().all(|r| r.settled)
    }

    pub fn table(&self) -> Table {
        let mut header: Vec<String> = vec!["replicate".into(), "seed".into()];
        header.extend(self.names.iter().cloned());
        header.extend(
            ["Xc", "Qx_i", "setpoint", "steady_state_error_pct", "settling_time_min", "overshoot_pct", "settled"]
                .map(String::from),
        );
        let mut t = Table::new(&header);
        for r in &self.replicates {
            let mut row: Vec<Value> = vec![r.index.into(), r.seed.into()];
            row.extend(self.names.iter().map(|n| Value::from(r.params.get(n).unwrap_or(f64::NAN))));
            row.extend([
                r.final_state.xc.into(),
                r.final_state.qx_i.into(),
                r.setpoint.into(),
                r.report.steady_state_error_pct.into(),
                r.report.settling_time_min.into(),
                r.report.overshoot_pct.into(),
                Value::from(if r.settled { "true" } else { "false" }),
            ]);
            t.push(row);
        }
        t
    }
}

/// Runs replicate `index` with sub-seed `seed`; reproducible in isolation.
pub fn run_replicate(s: &Scenario, mc: &MonteCarlo, base: &ConsortiumParams, index: usize, seed: u64) -> Result<Replicate> {
    let names = mc.parameter_names();
    let (p, factors) = perturb_params(base, &names, mc.magnitude, mc.distribution, seed)?;
    let run = simulate_aggregate(s, &p, s.mode, &s.reference)?;
    let kind = s.controller_kind();
    let report = aggregate_report(&format!("replicate_{index}"), &run, &p, kind, s.mode, s.reference.last_event())?;
    let yd = *run.yd.last().expect("non-empty run");
    let setpoint = (s.mode == Mode::Closed && kind.has(Branch::Integral)).then(|| rpa_setpoint(&p, yd)).transpose()?;
    Ok(Replicate {
        index,
        seed,
        factors,
        params: p,
        final_state: run.final_state(),
        setpoint,
        settled: settled(&run.times, &run.xc()) && report.is_finite(),
        report,
    })
}

pub fn monte_carlo(s: &Scenario, threads: Option<usize>) -> Result<MonteCarloResult> {
    let mc = s.monte_carlo.clone().ok_or_else(|| Error::validation("monte_carlo", "scenario has no Monte Carlo block"))?;
    let base = s.parameters()?;
    let seeds = replicate_seeds(mc.seed.unwrap_or(s.seed), mc.replicates);
    let reps: Result<Vec<Replicate>> = with_pool(threads, || {
        seeds
            .par_iter()
            .enumerate()
            .map(|(k, &seed)| run_replicate(s, &mc, &base, k, seed))
            .collect()
    })?;
    let replicates = reps?;
    let xc: Vec<f64> = replicates.iter().map(|r| r.final_state.xc).collect();
    Ok(MonteCarloResult {
        names: mc.parameter_names(),
        cv_xc: metrics::cv(&xc).ok(),
        replicates,
    })
}

pub fn run_monte_carlo(s: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    s.validate()?;
    prepare_dir(&opts.out_dir)?;
    let inner = || -> Result<RunOutput> {
        let res = monte_carlo(s, opts.threads)?;
        let p = s.parameters()?;
        let nominal = simulate_aggregate(s, &p, s.mode, &s.reference)?;
        let mut out = RunOutput::default();
        let mut reports: Vec<MetricsReport> = res.replicates.iter().map(|r| r.report.clone()).collect();
        let xc: Vec<f64> = res.replicates.iter().map(|r| r.final_state.xc).collect();
        let errs: Vec<f64> = res.replicates.iter().filter_map(|r| r.report.steady_state_error_pct).collect();
        reports.push(MetricsReport {
            label: "summary".into(),
            steady_state_error_pct: errs.iter().cloned().reduce(f64::max),
            cv: res.cv_xc,
            final_xc: metrics::mean(&xc).ok(),
            ..Default::default()
        });
        for r in res.replicates.iter().filter(|r| !r.settled) {
            out.warnings.push(format!("replicate {} (seed {}) did not settle", r.index, r.seed));
        }
        out.metrics = reports;
        if opts.format.csv() {
            out.files.push(res.table().save(&opts.out_dir.join("montecarlo.csv"))?);
        }
        write_aggregate_run(s, opts, &nominal, &mut out)?;
        if opts.format.svg() {
            let idx: Vec<f64> = (0..xc.len()).map(|k| k as f64).collect();
            let spec = PlotSpec::new(&format!("{}: Monte Carlo", s.name), "replicate", "steady-state Xc")
                .with(Series::scatter("Xc", idx, xc));
            out.files.push(save_plot(&spec, &opts.out_dir.join("montecarlo.svg"))?);
        }
        finish(s, opts, out)
    };
    inner().map_err(|e| scenario_error(s, e))
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub mode: Mode,
    pub xc: f64,
    /// X_c relative to the closed loop at the scenario's nominal point
    /// (1:1 composition for ratio sweeps).
    pub normalized: Option<f64>,
    pub ss_error_pct: Option<f64>,
    pub cv: Option<f64>,
    pub dynamic_range: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub mode: Mode,
    pub spread: f64,
    /// Least-squares slope of normalized X_c against log10 of the swept
    /// value (against the value itself when it can be non-positive).
    pub slope: f64,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: String,
    pub points: Vec<SweepPoint>,
    pub summaries: Vec<SweepSummary>,
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Closed => "closed",
        Mode::Open => "open",
    }
}

impl SweepResult {
    pub fn mode_points(&self, mode: Mode) -> Vec<&SweepPoint> {
        self.points.iter().filter(|p| p.mode == mode).collect()
    }

    pub fn summary(&self, mode: Mode) -> Option<&SweepSummary> {
        self.summaries.iter().find(|s| s.mode == mode)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            self.variable.as_str(),
            "mode",
            "Xc",
            "normalized_Xc",
            "steady_state_error_pct",
            "cv",
            "dynamic_range",
            "converged",
        ]);
        for p in &self.points {
            t.push(vec![
                p.value.into(),
                mode_name(p.mode).into(),
                p.xc.into(),
                p.normalized.into(),
                p.ss_error_pct.into(),
                p.cv.into(),
                p.dynamic_range.into(),
                Value::from(if p.converged { "true" } else { "false" }),
            ]);
        }
        t
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&["mode", "spread", "slope", "monotone"]);
        for s in &self.summaries {
            t.push(vec![
                mode_name(s.mode).into(),
                s.spread.into(),
                s.slope.into(),
                Value::from(if s.monotone { "true" } else { "false" }),
            ]);
        }
        t
    }

    fn summarise(&mut self) {
        let positive = self.points.iter().all(|p| p.value > 0.0);
        let mut modes: Vec<Mode> = self.points.iter().map(|p| p.mode).collect();
        modes.dedup();
        self.summaries = modes
            .into_iter()
            .filter_map(|mode| {
                let pts = self.mode_points(mode);
                let x: Vec<f64> = pts.iter().map(|p| if positive { p.value.log10() } else { p.value }).collect();
                let y: Vec<f64> = pts.iter().map(|p| p.normalized.unwrap_or(p.xc)).collect();
                let xc: Vec<f64> = pts.iter().map(|p| p.xc).collect();
                let spread = metrics::spread(&xc).ok()?;
                let slope = metrics::linear_fit(&x, &y).map(|f| f.1).unwrap_or(0.0);
                let monotone = metrics::is_monotone(&xc, true) || metrics::is_monotone(&xc, false);
                Some(SweepSummary {
                    mode,
                    spread,
                    slope,
                    monotone,
                })
            })
            .collect();
    }
}

/// Steady X_c over controller:target ratios at fixed target density, in
/// each requested mode. The open loop's feed-forward gain is calibrated
/// once at 1:1 and `yd`; values are normalized by the closed loop at 1:1.
pub fn composition_sweep(s: &Scenario, ratios: &[f64], modes: &[Mode], yd: f64) -> Result<SweepResult> {
    let p = s.parameters()?;
    aggregate_sweep(s, "ratio", ratios, modes, yd, |v| Ok((p.with_ratio(v), yd)))
}

fn aggregate_sweep(
    s: &Scenario,
    variable: &str,
    values: &[f64],
    modes: &[Mode],
    yd: f64,
    point: impl Fn(f64) -> Result<(ConsortiumParams, f64)> + Sync,
) -> Result<SweepResult> {
    let nominal = s.parameters()?;
    let open_nominal = if modes.contains(&Mode::Open) {
        Some(open_loop_params(&nominal, yd)?)
    } else {
        None
    };
    let (reference_state, _) = aggregate_steady(s, &nominal, Mode::Closed, yd, None)?;
    let norm = reference_state.xc;
    let jobs: Vec<(f64, Mode)> = modes.iter().flat_map(|&m| values.iter().map(move |&v| (v, m))).collect();
    let points: Result<Vec<SweepPoint>> = jobs
        .par_iter()
        .map(|&(v, mode)| {
            let (p, y) = point(v)?;
            // The open loop keeps its nominal design (μ_ff, θ = 0) and only
            // inherits what the sweep changes.
            let open = open_nominal.map(|q| ConsortiumParams {
                theta: 0.0,
                mu: q.mu,
                ..p
            });
            let (ss, ok) = aggregate_steady(s, &p, mode, y, open.as_ref())?;
            let err = (mode == Mode::Closed && s.controller_kind().has(Branch::Integral))
                .then(|| rpa_setpoint(&p, y).map(|sp| metrics::steady_state_error_pct(ss.qx_i, sp)))
                .transpose()?;
            Ok(SweepPoint {
                value: v,
                mode,
                xc: ss.xc,
                normalized: (norm > 0.0).then(|| ss.xc / norm),
                ss_error_pct: err,
                cv: None,
                dynamic_range: None,
                converged: ok,
            })
        })
        .collect();
    let mut res = SweepResult {
        variable: variable.into(),
        points: points?,
        summaries: Vec::new(),
    };
    res.summarise();
    Ok(res)
}

/// Final population statistics of one agent run: (mean X_c, CV, converged).
pub fn agent_steady(s: &Scenario, p: &ConsortiumParams, cfg: WorldConfig, reference: ReferenceSignal) -> Result<(f64, f64, bool)> {
    let mut world = agent_world(s, p, cfg, reference)?;
    let samples = agent::run_recording(&mut world, s.integrator.horizon, s.integrator.output_dt)?;
    let times: Vec<f64> = samples.iter().map(|a| a.t).collect();
    let xc: Vec<f64> = samples.iter().map(|a| a.mean_xc).collect();
    let last = samples.last().expect("recording has samples");
    Ok((last.mean_xc, last.cv_xc, converged(&times, &xc)))
}

fn agent_sweep(s: &Scenario, variable: &str, values: &[f64], range: Option<[f64; 2]>) -> Result<SweepResult> {
    let p0 = s.parameters()?;
    let base = s.agent.unwrap_or_default();
    let points: Result<Vec<SweepPoint>> = values
        .par_iter()
        .map(|&v| {
            let mut cfg = base;
            let mut p = p0;
            let mut reference = s.reference.clone();
            match variable {
                "ratio" => {
                    let (_, targets) = cfg.placement.counts();
                    let controllers = (v * targets as f64).round() as usize;
                    cfg.placement = match cfg.placement {
                        Placement::Mixed { targets, .. } => Placement::Mixed { controllers, targets },
                        Placement::Separated {
                            targets, distance, radius, ..
                        } => Placement::Separated {
                            controllers,
                            targets,
                            distance,
                            radius,
                        },
                    };
                }
                "separation" => {
                    if let Placement::Separated { distance, .. } = &mut cfg.placement {
                        *distance = v;
                    }
                }
                "reference" => reference = ReferenceSignal::constant(v),
                name => p.set(name, v)?,
            }
            let (xc, cv, ok, dr) = match range {
                Some([lo, hi]) => {
                    let (x_lo, _, ok_lo) = agent_steady(s, &p, cfg, ReferenceSignal::constant(lo))?;
                    let (x_hi, cv, ok_hi) = agent_steady(s, &p, cfg, ReferenceSignal::constant(hi))?;
                    (x_hi, cv, ok_lo && ok_hi, Some(x_hi - x_lo))
                }
                None => {
                    let (x, cv, ok) = agent_steady(s, &p, cfg, reference)?;
                    (x, cv, ok, None)
                }
            };
            Ok(SweepPoint {
                value: v,
                mode: Mode::Closed,
                xc,
                normalized: None,
                ss_error_pct: None,
                cv: Some(cv),
                dynamic_range: dr,
                converged: ok,
            })
        })
        .collect();
    let mut res = SweepResult {
        variable: variable.into(),
        points: points?,
        summaries: Vec::new(),
    };
    res.summarise();
    Ok(res)
}

fn actuation_sweep(s: &Scenario, values: &[f64]) -> Result<SweepResult> {
    let (cfg, _, _) = reactor_setup(s);
    let init = cfg.initial_state(0.5, 0.5);
    let points: Result<Vec<SweepPoint>> = values
        .par_iter()
        .map(|&v| {
            let tr = simulate_constant(&cfg, v, &init, s.integrator.horizon)?;
            let times: Vec<f64> = tr.samples.iter().map(|c| c.t).collect();
            let r = tr.final_state.ratio();
            Ok(SweepPoint {
                value: v,
                mode: Mode::Open,
                xc: r,
                normalized: None,
                ss_error_pct: None,
                cv: None,
                dynamic_range: None,
                converged: converged(&times, &tr.ratios()),
            })
        })
        .collect();
    let mut res = SweepResult {
        variable: match cfg.topology {
            Topology::Single => "dilution".into(),
            Topology::Dual => "transfer".into(),
        },
        points: points?,
        summaries: Vec::new(),
    };
    res.summarise();
    Ok(res)
}

/// Evaluates the scenario's sweep block.
pub fn sweep(s: &Scenario, threads: Option<usize>) -> Result<SweepResult> {
    let sw = s.sweep.clone().ok_or_else(|| Error::validation("sweep", "scenario has no sweep block"))?;
    let yd = s.reference.value_at(s.integrator.horizon);
    let p = s.parameters()?;
    with_pool(threads, || match (s.engine, sw.variable.as_str()) {
        (Engine::Agent, v) => agent_sweep(s, v, &sw.values, sw.range),
        (Engine::Composition, _) => actuation_sweep(s, &sw.values),
        (_, "ratio") => composition_sweep(s, &sw.values, &sw.modes, yd),
        (_, "reference") => aggregate_sweep(s, "reference", &sw.values, &sw.modes, yd, |v| Ok((p, v))),
        (_, name) => aggregate_sweep(s, name, &sw.values, &sw.modes, yd, |v| {
            let mut q = p;
            q.set(name, v)?;
            q.validate()?;
            Ok((q, yd))
        }),
    })?
}

pub fn run_sweep(s: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    s.validate()?;
    if s.sweep.is_none() {
        return Err(Error::validation("sweep", "scenario has no sweep block"));
    }
    prepare_dir(&opts.out_dir)?;
    let inner = || -> Result<RunOutput> {
        let res = sweep(s, opts.threads)?;
        let mut out = RunOutput::default();
        for p in res.points.iter().filter(|p| !p.converged) {
            out.warnings.push(format!("{} = {} ({}) did not converge", res.variable, p.value, mode_name(p.mode)));
        }
        out.metrics = res
            .summaries
            .iter()
            .map(|sm| {
                let pts = res.mode_points(sm.mode);
                let x: Vec<f64> = pts.iter().map(|p| p.value).collect();
                let y: Vec<f64> = pts.iter().map(|p| p.xc).collect();
                let dr: Vec<f64> = pts.iter().filter_map(|p| p.dynamic_range).collect();
                MetricsReport {
                    label: format!("{}_{}", res.variable, mode_name(sm.mode)),
                    steady_state_error_pct: pts.iter().filter_map(|p| p.ss_error_pct).reduce(f64::max),
                    cv: metrics::cv(&y).ok(),
                    r_squared: metrics::r_squared(&x, &y).ok(),
                    dynamic_range: dr.iter().cloned().reduce(f64::min),
                    final_xc: y.last().copied(),
                    ..Default::default()
                }
            })
            .collect();
        if opts.format.csv() {
            out.files.push(res.table().save(&opts.out_dir.join("sweep.csv"))?);
            out.files.push(res.summary_table().save(&opts.out_dir.join("sweep_summary.csv"))?);
        }
        if opts.format.svg() {
            let mut spec = PlotSpec::new(&format!("{}: {} sweep", s.name, res.variable), &res.variable, "steady state");
            for sm in &res.summaries {
                let pts = res.mode_points(sm.mode);
                let y = pts.iter().map(|p| p.dynamic_range.unwrap_or(p.xc)).collect();
                spec = spec.with(Series::scatter(mode_name(sm.mode), pts.iter().map(|p| p.value).collect(), y));
            }
            out.files.push(save_plot(&spec, &opts.out_dir.join("sweep.svg"))?);
        }
        finish(s, opts, out)
    };
    inner().map_err(|e| scenario_error(s, e))
}

// ---------------------------------------------------------------------------
// Closed versus open loop

#[derive(Debug, Clone, PartialEq)]
pub struct ModeComparison {
    pub mode: Mode,
    /// Steady X_c per replicate (outer) and grid reference (inner).
    pub replicate_xc: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    /// Replicate CV at each grid reference; `None` with one replicate.
    pub cvs: Vec<Option<f64>>,
    pub cv_intermediate: Option<f64>,
    /// R² of the replicate-mean X_c against the reference grid.
    pub r_squared: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareResult {
    pub grid: Vec<f64>,
    pub intermediate: f64,
    pub closed: ModeComparison,
    pub open: ModeComparison,
}

impl CompareResult {
    /// Open-loop CV over closed-loop CV at the intermediate reference.
    pub fn cv_ratio(&self) -> Option<f64> {
        match (self.open.cv_intermediate, self.closed.cv_intermediate) {
            (Some(o), Some(c)) if c > 0.0 => Some(o / c),
            _ => None,
        }
    }

    pub fn reports(&self) -> [MetricsReport; 2] {
        [&self.closed, &self.open].map(|m| MetricsReport {
            label: mode_name(m.mode).into(),
            cv: m.cv_intermediate,
            r_squared: Some(m.r_squared),
            dynamic_range: Some(m.means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - m.means.iter().cloned().fold(f64::INFINITY, f64::min)),
            ..Default::default()
        })
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["mode", "reference", "mean_Xc", "cv_Xc"]);
        for m in [&self.closed, &self.open] {
            for (k, yd) in self.grid.iter().enumerate() {
                t.push(vec![mode_name(m.mode).into(), (*yd).into(), m.means[k].into(), m.cvs[k].into()]);
            }
        }
        t
    }
}

/// Heterogeneity-perturbed replicates of both loops over a reference grid.
/// Each replicate draws log-normal factors for the comparison parameters;
/// the open loop's feed-forward gain is calibrated once on the unperturbed
/// parameters at the calibration reference.
pub fn closed_vs_open_loop(s: &Scenario, threads: Option<usize>) -> Result<CompareResult> {
    let c: Compare = s.compare.clone().ok_or_else(|| Error::validation("compare", "scenario has no compare block"))?;
    let nominal = s.parameters()?;
    let mu_ff = feedforward_gain(&nominal, c.calibration_reference)?;
    let seeds = replicate_seeds(s.seed, c.replicates);
    // Per replicate: closed and open X_c over the grid, and convergence.
    type Runs = Vec<(Vec<f64>, Vec<f64>, bool)>;
    let runs: Result<Runs> = with_pool(threads, || {
        seeds
            .par_iter()
            .map(|&seed| {
                let (p, _) = perturb_params(&nominal, &c.parameters, c.heterogeneity_cv, Perturbation::LogNormal, seed)?;
                let q = p.open_loop(mu_ff);
                let mut closed = Vec::with_capacity(c.reference_grid.len());
                let mut open = Vec::with_capacity(c.reference_grid.len());
                let mut ok = true;
                for &yd in &c.reference_grid {
                    let (a, ok_a) = aggregate_steady(s, &p, Mode::Closed, yd, None)?;
                    let (b, ok_b) = aggregate_steady(s, &p, Mode::Open, yd, Some(&q))?;
                    closed.push(a.xc);
                    open.push(b.xc);
                    ok &= ok_a && ok_b;
                }
                Ok((closed, open, ok))
            })
            .collect()
    })?;
    let runs = runs?;
    let intermediate = c.intermediate_reference();
    let k_mid = c.reference_grid.iter().position(|v| *v == intermediate).expect("intermediate is on the grid");
    let summarise = |mode: Mode, data: Vec<Vec<f64>>, ok: bool| -> Result<ModeComparison> {
        let n = c.reference_grid.len();
        let column = |k: usize| data.iter().map(|r| r[k]).collect::<Vec<f64>>();
        let means: Vec<f64> = (0..n).map(|k| metrics::mean(&column(k))).collect::<Result<_>>()?;
        let cvs: Vec<Option<f64>> = (0..n).map(|k| metrics::cv(&column(k)).ok()).collect();
        Ok(ModeComparison {
            mode,
            r_squared: metrics::r_squared(&c.reference_grid, &means)?,
            cv_intermediate: cvs[k_mid],
            replicate_xc: data,
            means,
            cvs,
            converged: ok,
        })
    };
    let ok = runs.iter().all(|r| r.2);
    let closed = runs.iter().map(|r| r.0.clone()).collect();
    let open = runs.iter().map(|r| r.1.clone()).collect();
    Ok(CompareResult {
        grid: c.reference_grid.clone(),
        intermediate,
        closed: summarise(Mode::Closed, closed, ok)?,
        open: summarise(Mode::Open, open, ok)?,
    })
}

pub fn run_compare(s: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    s.validate()?;
    if s.compare.is_none() {
        return Err(Error::validation("compare", "scenario has no compare block"));
    }
    prepare_dir(&opts.out_dir)?;
    let inner = || -> Result<RunOutput> {
        let res = closed_vs_open_loop(s, opts.threads)?;
        let mut out = RunOutput {
            metrics: res.reports().to_vec(),
            ..Default::default()
        };
        if !res.closed.converged {
            out.warnings.push("some replicates did not converge".into());
        }
        if opts.format.csv() {
            out.files.push(res.table().save(&opts.out_dir.join("compare.csv"))?);
        }
        if opts.format.svg() {
            let spec = PlotSpec::new(&format!("{}: closed vs open loop", s.name), "reference Yd", "mean steady Xc")
                .with(Series::scatter("closed", res.grid.clone(), res.closed.means.clone()))
                .with(Series::scatter("open", res.grid.clone(), res.open.means.clone()));
            out.files.push(save_plot(&spec, &opts.out_dir.join("compare.svg"))?);
        }
        finish(s, opts, out)
    };
    inner().map_err(|e| scenario_error(s, e))
}
