//! Python bindings: parameters, references, the aggregate integrator, the
//! agent world and scenario execution.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use consortia::agent::{Placement, Population, World, WorldConfig};
use consortia::aggregate::{self, InitialCondition};
use consortia::harness::{self, Format, RunOptions, Scenario};
use consortia::model::{self, LoopMode, PARAM_NAMES, STATE_NAMES};
use consortia::ode::{IntegratorConfig, Method};
use consortia::{ConsortiumParams, Error, ReferenceSignal};

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Kinetic parameter set; starts at the calibrated nominal values.
#[pyclass(name = "Params", from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: ConsortiumParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<BTreeMap<String, f64>>) -> PyResult<Self> {
        let mut inner = ConsortiumParams::nominal();
        for (k, v) in overrides.unwrap_or_default() {
            inner.set(&k, v).map_err(|_| PyKeyError::new_err(k))?;
        }
        inner.validate().map_err(to_py)?;
        Ok(PyParams { inner })
    }

    #[staticmethod]
    fn names() -> Vec<&'static str> {
        PARAM_NAMES.to_vec()
    }

    fn __getitem__(&self, name: &str) -> PyResult<f64> {
        self.inner.get(name).ok_or_else(|| PyKeyError::new_err(name.to_string()))
    }

    fn __setitem__(&mut self, name: &str, value: f64) -> PyResult<()> {
        self.inner.set(name, value).map_err(|_| PyKeyError::new_err(name.to_string()))
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    /// Copy with N_c = ratio · N_t.
    fn with_ratio(&self, ratio: f64) -> Self {
        PyParams {
            inner: self.inner.with_ratio(ratio),
        }
    }

    fn to_dict(&self) -> BTreeMap<&'static str, f64> {
        PARAM_NAMES.iter().map(|n| (*n, self.inner.get(n).unwrap())).collect()
    }

    fn __repr__(&self) -> String {
        format!("Params(mu={}, theta={}, n_c={}, n_t={})", self.inner.mu, self.inner.theta, self.inner.n_c, self.inner.n_t)
    }
}

/// Reference signal Y_d(t).
#[pyclass(name = "Reference", from_py_object)]
#[derive(Clone)]
struct PyReference {
    inner: ReferenceSignal,
}

#[pymethods]
impl PyReference {
    #[staticmethod]
    fn constant(value: f64) -> Self {
        PyReference {
            inner: ReferenceSignal::constant(value),
        }
    }

    #[staticmethod]
    fn step(before: f64, after: f64, at: f64) -> Self {
        PyReference {
            inner: ReferenceSignal::step(before, after, at),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (mean, amplitude, period, phase=0.0))]
    fn sinusoid(mean: f64, amplitude: f64, period: f64, phase: f64) -> PyResult<Self> {
        let inner = ReferenceSignal::Sinusoid {
            mean,
            amplitude,
            period,
            phase,
        };
        inner.validate().map_err(to_py)?;
        Ok(PyReference { inner })
    }

    #[staticmethod]
    fn trapezoid(low: f64, high: f64, start: f64, rise: f64, hold: f64, fall: f64) -> PyResult<Self> {
        let inner = ReferenceSignal::Trapezoid {
            low,
            high,
            start,
            rise,
            hold,
            fall,
        };
        inner.validate().map_err(to_py)?;
        Ok(PyReference { inner })
    }

    fn __call__(&self, t: f64) -> PyResult<f64> {
        self.inner.eval(t).map_err(to_py)
    }
}

#[pyfunction]
fn hill_activation(q: f64, params: &PyParams) -> PyResult<f64> {
    model::hill_activation(q, &params.inner).map_err(to_py)
}

#[pyfunction]
fn rpa_setpoint(params: &PyParams, yd: f64) -> PyResult<f64> {
    aggregate::rpa_setpoint(&params.inner, yd).map_err(to_py)
}

#[pyfunction]
fn leak_error(params: &PyParams, yd: f64) -> PyResult<f64> {
    aggregate::leak_error(&params.inner, yd).map_err(to_py)
}

/// Closed-loop steady state at constant Y_d as a name → value dict.
#[pyfunction]
fn steady_state(params: &PyParams, yd: f64) -> PyResult<BTreeMap<&'static str, f64>> {
    let s = aggregate::find_steady_state(&params.inner, yd, &consortia::AggregateState::ZERO).map_err(to_py)?;
    Ok(STATE_NAMES.iter().copied().zip(s.to_array()).collect())
}

/// Integrates the closed loop from its basal steady state. Returns columns
/// keyed by `t`, `Yd` and the state names.
#[pyfunction]
#[pyo3(signature = (params, reference, horizon, output_dt=1.0, method="adaptive", zero_initial=false))]
fn integrate(
    py: Python<'_>,
    params: &PyParams,
    reference: &PyReference,
    horizon: f64,
    output_dt: f64,
    method: &str,
    zero_initial: bool,
) -> PyResult<BTreeMap<String, Vec<f64>>> {
    let method = match method {
        "adaptive" => Method::Adaptive,
        "rk4" => Method::Rk4,
        "semi_implicit" => Method::SemiImplicit,
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    let cfg = IntegratorConfig {
        method,
        horizon,
        output_dt,
        ..Default::default()
    };
    let ic = if zero_initial { InitialCondition::Zero } else { InitialCondition::Basal };
    let (p, r) = (params.inner, reference.inner.clone());
    let tr = py
        .detach(move || {
            let init = aggregate::initial_state(&p, LoopMode::Closed, ic)?;
            aggregate::integrate(&p, &r, &init, &cfg)
        })
        .map_err(to_py)?;
    let mut out = BTreeMap::new();
    out.insert("t".to_string(), tr.times.clone());
    out.insert("Yd".to_string(), tr.reference.clone());
    for (k, name) in STATE_NAMES.iter().enumerate() {
        out.insert(name.to_string(), tr.component(k));
    }
    Ok(out)
}

/// Spatial agent world.
#[pyclass(name = "AgentWorld")]
struct PyWorld {
    inner: World,
}

#[pymethods]
impl PyWorld {
    #[new]
    #[pyo3(signature = (params, reference, width=100.0, height=100.0, controllers=250, targets=250, dt=0.05, well_mixed=false, heterogeneity_cv=0.2, growth_rate=0.0, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        params: &PyParams,
        reference: &PyReference,
        width: f64,
        height: f64,
        controllers: usize,
        targets: usize,
        dt: f64,
        well_mixed: bool,
        heterogeneity_cv: f64,
        growth_rate: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = WorldConfig {
            width,
            height,
            dt,
            well_mixed,
            heterogeneity_cv,
            growth_rate,
            seed,
            placement: Placement::Mixed { controllers, targets },
            ..Default::default()
        };
        let inner = World::new(cfg, params.inner, reference.inner.clone()).map_err(to_py)?;
        Ok(PyWorld { inner })
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.t
    }

    #[getter]
    fn cell_count(&self) -> usize {
        self.inner.cells.len()
    }

    #[pyo3(signature = (n=1))]
    fn step(&mut self, py: Python<'_>, n: usize) -> PyResult<()> {
        let w = &mut self.inner;
        py.detach(|| (0..n).try_for_each(|_| w.step())).map_err(to_py)
    }

    fn run_until(&mut self, py: Python<'_>, horizon: f64) -> PyResult<()> {
        let w = &mut self.inner;
        py.detach(|| w.run_until(horizon)).map_err(to_py)
    }

    /// Population mean of a species (`controller` or `target` tag).
    fn mean(&self, tag: &str, species: &str) -> PyResult<f64> {
        let tag = match tag {
            "controller" => Population::Controller,
            "target" => Population::Target,
            other => return Err(PyValueError::new_err(format!("unknown population `{other}`"))),
        };
        self.inner.mean_species(tag, species).map_err(to_py)
    }

    /// Total extracellular plus intracellular amount of each QS species.
    fn qs_totals(&self) -> (f64, f64) {
        let [u, x] = self.inner.qs_totals();
        (u, x)
    }

    /// Worst relative imbalance of the membrane-exchange ledger so far.
    fn ledger_worst(&self) -> f64 {
        self.inner.ledger.worst
    }
}

/// Parses and validates a scenario; returns its canonical TOML form.
#[pyfunction]
fn validate_scenario(text: &str) -> PyResult<String> {
    let s = Scenario::from_toml_str(text).map_err(to_py)?;
    s.to_canonical_toml().map_err(to_py)
}

/// Runs a scenario and returns the written file paths.
#[pyfunction]
#[pyo3(signature = (text, out_dir, format="both", threads=None))]
fn run_scenario(py: Python<'_>, text: &str, out_dir: PathBuf, format: &str, threads: Option<usize>) -> PyResult<Vec<String>> {
    let format = match format {
        "csv" => Format::Csv,
        "svg" => Format::Svg,
        "both" => Format::Both,
        other => return Err(PyValueError::new_err(format!("unknown format `{other}`"))),
    };
    let s = Scenario::from_toml_str(text).map_err(to_py)?;
    let opts = RunOptions {
        out_dir,
        format,
        threads,
    };
    let out = py.detach(|| harness::run_scenario(&s, &opts)).map_err(to_py)?;
    Ok(out.files.iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn pyconsortia(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyReference>()?;
    m.add_class::<PyWorld>()?;
    m.add_function(wrap_pyfunction!(hill_activation, m)?)?;
    m.add_function(wrap_pyfunction!(rpa_setpoint, m)?)?;
    m.add_function(wrap_pyfunction!(leak_error, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(validate_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
