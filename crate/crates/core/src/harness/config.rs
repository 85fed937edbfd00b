//! Scenario files: TOML documents describing one experiment.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::WorldConfig;
use crate::aggregate::InitialCondition;
use crate::composition::{CompositionController, Coupling, Measurement, ReactorConfig};
use crate::controller::{ControllerConfig, ControllerKind};
use crate::error::{Error, Result};
use crate::model::params::PARAM_NAMES;
use crate::model::{ConsortiumParams, ReferenceSignal};
use crate::ode::IntegratorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Aggregate,
    Agent,
    Composition,
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Closed,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Svg,
    #[default]
    Both,
}

impl Format {
    pub fn csv(&self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn svg(&self) -> bool {
        matches!(self, Format::Svg | Format::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Factor drawn uniformly from [1 − m, 1 + m].
    #[default]
    Uniform,
    /// Mean-one log-normal factor with CV m.
    LogNormal,
}

/// Parameters perturbed when a Monte Carlo block lists none.
pub const KINETIC_PARAMS: [&str; 12] = [
    "mu", "theta", "gamma_z", "gamma", "beta_u", "beta_x", "eta", "gamma_e", "alpha_0", "alpha_max", "k_u", "n_u",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarlo {
    pub replicates: usize,
    /// Relative perturbation magnitude (0.2 for ±20%).
    pub magnitude: f64,
    pub distribution: Perturbation,
    /// Parameter names to perturb; empty means all kinetic parameters.
    pub parameters: Vec<String>,
    /// Overrides the scenario seed for the draws.
    pub seed: Option<u64>,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        MonteCarlo {
            replicates: 30,
            magnitude: 0.2,
            distribution: Perturbation::Uniform,
            parameters: Vec::new(),
            seed: None,
        }
    }
}

impl MonteCarlo {
    pub fn parameter_names(&self) -> Vec<String> {
        if self.parameters.is_empty() {
            KINETIC_PARAMS.iter().map(|s| s.to_string()).collect()
        } else {
            self.parameters.clone()
        }
    }
}

/// Default replicate draws of the closed/open comparison: the target
/// population and the actuation channel. The reference mapping (μ, θ or the
/// feed-forward gain) is a design constant shared by all replicates.
pub const PLANT_PARAMS: [&str; 4] = ["alpha_max", "k_u", "beta_x", "beta_u"];

/// Sweep variables understood besides parameter names.
pub const SWEEP_SPECIALS: [&str; 4] = ["ratio", "separation", "reference", "actuation"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// `ratio`, `separation`, `reference`, `actuation` or a parameter name.
    pub variable: String,
    pub values: Vec<f64>,
    /// Loop modes evaluated at each point.
    #[serde(default = "both_modes")]
    pub modes: Vec<Mode>,
    /// Low and high references; when set, each point reports the steady
    /// dynamic range between them.
    #[serde(default)]
    pub range: Option<[f64; 2]>,
}

fn both_modes() -> Vec<Mode> {
    vec![Mode::Closed, Mode::Open]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Compare {
    pub reference_grid: Vec<f64>,
    pub replicates: usize,
    /// Log-normal CV of the per-replicate parameter draws.
    pub heterogeneity_cv: f64,
    /// Reference at which the open loop's feed-forward gain is matched.
    pub calibration_reference: f64,
    /// Reference at which replicate CVs are compared; defaults to the grid
    /// median.
    pub intermediate: Option<f64>,
    /// Parameters drawn per replicate.
    pub parameters: Vec<String>,
}

impl Default for Compare {
    fn default() -> Self {
        Compare {
            reference_grid: vec![0.25, 0.5, 1.0, 1.5, 2.0, 3.0],
            replicates: 20,
            heterogeneity_cv: 0.2,
            calibration_reference: 1.0,
            intermediate: None,
            parameters: PLANT_PARAMS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Compare {
    pub fn intermediate_reference(&self) -> f64 {
        self.intermediate.unwrap_or_else(|| {
            let mut g = self.reference_grid.clone();
            g.sort_by(f64::total_cmp);
            g[g.len() / 2]
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: Option<String>,
    pub format: Format,
}

/// Metric names accepted in `metrics`.
pub const METRIC_NAMES: [&str; 8] = [
    "settling_time",
    "overshoot",
    "steady_state_error",
    "rmse",
    "cv",
    "r_squared",
    "dynamic_range",
    "final_xc",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    /// Controller composition; integral-only when absent.
    #[serde(default)]
    pub controller: Option<ControllerKind>,
    /// Overrides applied on top of the nominal parameter set.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_reference")]
    pub reference: ReferenceSignal,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Metrics to report; all when empty.
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub controller_config: Option<ControllerConfig>,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarlo>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub compare: Option<Compare>,
    #[serde(default)]
    pub agent: Option<WorldConfig>,
    #[serde(default)]
    pub reactor: Option<ReactorConfig>,
    #[serde(default)]
    pub composition: Option<CompositionController>,
    #[serde(default)]
    pub measurement: Option<Measurement>,
    #[serde(default)]
    pub coupling: Option<Coupling>,
}

fn default_reference() -> ReferenceSignal {
    ReferenceSignal::step(0.0, 1.0, 0.0)
}

impl Scenario {
    /// A minimal aggregate step-response scenario.
    pub fn minimal(name: &str) -> Self {
        Scenario {
            name: name.into(),
            engine: Engine::Aggregate,
            seed: 0,
            mode: Mode::Closed,
            controller: None,
            params: BTreeMap::new(),
            reference: default_reference(),
            initial: InitialCondition::Basal,
            integrator: IntegratorConfig::default(),
            metrics: Vec::new(),
            output: Output::default(),
            controller_config: None,
            monte_carlo: None,
            sweep: None,
            compare: None,
            agent: None,
            reactor: None,
            composition: None,
            measurement: None,
            coupling: None,
        }
    }

    /// Parses without semantic validation.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| parse_error(text, &e))
    }

    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s = Self::parse(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Canonical TOML form; parsing it yields an equal scenario.
    pub fn to_canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise scenario: {e}")))
    }

    /// Nominal parameters with the scenario's overrides applied.
    pub fn parameters(&self) -> Result<ConsortiumParams> {
        let mut p = ConsortiumParams::nominal();
        for (k, v) in &self.params {
            p.set(k, *v).map_err(|_| Error::validation(format!("params.{k}"), "unknown parameter name"))?;
        }
        p.validate().map_err(|e| match e {
            Error::ParameterDomain { name, reason, .. } => Error::validation(format!("params.{name}"), reason),
            other => other,
        })?;
        Ok(p)
    }

    pub fn controller_kind(&self) -> ControllerKind {
        self.controller.unwrap_or(ControllerKind::I)
    }

    pub fn metric_enabled(&self, name: &str) -> bool {
        self.metrics.is_empty() || self.metrics.iter().any(|m| m == name)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str, m: &str| Err(Error::validation(f, m));
        if self.name.trim().is_empty() {
            return field("name", "must not be empty");
        }
        let p = self.parameters()?;
        self.reference
            .validate()
            .map_err(|e| Error::validation("reference", e.to_string()))?;
        self.integrator.validate()?;
        for m in &self.metrics {
            if !METRIC_NAMES.contains(&m.as_str()) {
                return field("metrics", &format!("unknown metric `{m}`; expected one of {}", METRIC_NAMES.join(", ")));
            }
        }
        let kind = self.controller_kind();
        if kind != ControllerKind::I && self.engine != Engine::Aggregate {
            return field("controller", "P/PI/PD/PID compositions are only available with the aggregate engine");
        }
        if kind != ControllerKind::I && self.mode == Mode::Open {
            return field("mode", "the open loop is defined for the integral controller only");
        }
        if let Some(cc) = &self.controller_config {
            cc.derivative.validate().map_err(|e| Error::validation("controller_config.derivative", e.to_string()))?;
        }
        if let Some(mc) = &self.monte_carlo {
            if self.engine != Engine::Aggregate {
                return field("monte_carlo", "Monte Carlo replicates need the aggregate engine");
            }
            if mc.replicates == 0 {
                return field("monte_carlo.replicates", "must be at least 1");
            }
            if !(mc.magnitude >= 0.0 && mc.magnitude < 1.0) {
                return field("monte_carlo.magnitude", "must lie in [0, 1)");
            }
            for name in &mc.parameters {
                if !PARAM_NAMES.contains(&name.as_str()) {
                    return field("monte_carlo.parameters", &format!("unknown parameter `{name}`"));
                }
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return field("sweep.values", "must not be empty");
            }
            if sw.modes.is_empty() {
                return field("sweep.modes", "must name at least one mode");
            }
            if sw.values.iter().any(|v| !v.is_finite()) {
                return field("sweep.values", "must be finite");
            }
            let v = sw.variable.as_str();
            let ok = match v {
                "ratio" => matches!(self.engine, Engine::Aggregate | Engine::Agent),
                "separation" => self.engine == Engine::Agent,
                "reference" => matches!(self.engine, Engine::Aggregate | Engine::Agent),
                "actuation" => self.engine == Engine::Composition,
                name if PARAM_NAMES.contains(&name) => matches!(self.engine, Engine::Aggregate | Engine::Agent),
                _ => return field("sweep.variable", &format!("unknown sweep variable `{v}`")),
            };
            if !ok {
                return field("sweep.variable", &format!("`{v}` sweeps are not supported by the {:?} engine", self.engine));
            }
            if v == "ratio" && sw.values.iter().any(|x| *x <= 0.0) {
                return field("sweep.values", "ratios must be positive");
            }
            if let Some([lo, hi]) = sw.range {
                if !(lo >= 0.0 && hi > lo) {
                    return field("sweep.range", "needs 0 <= low < high");
                }
            }
            if v == "separation" && !matches!(self.agent.unwrap_or_default().placement, crate::agent::Placement::Separated { .. }) {
                return field("agent.placement", "separation sweeps need the `separated` placement");
            }
            if self.engine == Engine::Agent && sw.modes.contains(&Mode::Open) {
                return field("sweep.modes", "the agent engine runs the closed loop only");
            }
        }
        if let Some(c) = &self.compare {
            if self.engine != Engine::Aggregate {
                return field("compare", "closed/open comparison needs the aggregate engine");
            }
            if c.reference_grid.len() < 2 || c.reference_grid.iter().any(|v| !(*v > 0.0)) {
                return field("compare.reference_grid", "needs at least two positive references");
            }
            for name in &c.parameters {
                if !PARAM_NAMES.contains(&name.as_str()) {
                    return field("compare.parameters", &format!("unknown parameter `{name}`"));
                }
            }
            if let Some(m) = c.intermediate {
                if !c.reference_grid.contains(&m) {
                    return field("compare.intermediate", "must be one of the grid references");
                }
            }
            if c.replicates == 0 {
                return field("compare.replicates", "must be at least 1");
            }
            if !(0.0..1.0).contains(&c.heterogeneity_cv) {
                return field("compare.heterogeneity_cv", "must lie in [0, 1)");
            }
            if !(c.calibration_reference > 0.0) {
                return field("compare.calibration_reference", "must be positive");
            }
        }
        match self.engine {
            Engine::Agent => {
                if self.mode == Mode::Open {
                    return field("mode", "the agent engine runs the closed loop only");
                }
                let w = self.agent.unwrap_or_default();
                w.validate(&p).map_err(|e| match e {
                    Error::Validation { field, message } => Error::validation(format!("agent.{field}"), message),
                    other => other,
                })?;
            }
            Engine::Composition | Engine::Coupled => {
                let r = self.reactor.unwrap_or_default();
                r.validate().map_err(|e| Error::validation("reactor", e.to_string()))?;
                if let Some(c) = &self.composition {
                    c.validate().map_err(|e| match e {
                        Error::Validation { field, message } => Error::validation(format!("composition.{field}"), message),
                        other => other,
                    })?;
                }
                if let Some(m) = &self.measurement {
                    if !(m.period > 0.0) {
                        return field("measurement.period", "must be positive");
                    }
                }
            }
            Engine::Aggregate => {}
        }
        if self.engine != Engine::Agent && self.agent.is_some() {
            return field("agent", "agent settings need the agent engine");
        }
        Ok(())
    }
}

/// Converts a TOML deserialization error into a positioned parse error.
pub fn parse_error(text: &str, e: &toml::de::Error) -> Error {
    let (line, column) = match e.span() {
        Some(span) => line_col(text, span.start),
        None => (0, 0),
    };
    Error::Parse {
        line,
        column,
        message: e.message().to_string(),
    }
}

/// 1-based line and column of a byte offset.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(offset, |p| offset - p - 1) + 1;
    (line, col)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
name = "mc"
engine = "aggregate"
seed = 7

[params]
gamma_z = 20.0

[reference]
kind = "step"
before = 0.0
after = 1.0
at = 60.0

[integrator]
horizon = 900.0
output_dt = 5.0

[monte_carlo]
replicates = 4
magnitude = 0.2
parameters = ["alpha_max", "k_u"]

[sweep]
variable = "ratio"
values = [0.2, 1.0, 5.0]
"#;

    #[test]
    fn parses_and_round_trips() {
        let s = Scenario::from_toml_str(FULL).unwrap();
        assert_eq!(s.params["gamma_z"], 20.0);
        assert_eq!(s.monte_carlo.as_ref().unwrap().replicates, 4);
        let text = s.to_canonical_toml().unwrap();
        assert_eq!(Scenario::from_toml_str(&text).unwrap(), s);
    }

    #[test]
    fn parse_errors_carry_position() {
        let bad = "name = \"x\"\nengine = \"aggregate\"\nhorizon = = 3\n";
        match Scenario::parse(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match Scenario::parse("name = \"x\"\nbogus = 1\n") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_names_the_field() {
        let mut s = Scenario::minimal("x");
        s.params.insert("gamma_q".into(), -1.0);
        match s.validate() {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "params.gamma_q"),
            other => panic!("{other:?}"),
        }
        let mut s = Scenario::minimal("x");
        s.sweep = Some(Sweep {
            variable: "separation".into(),
            values: vec![0.0, 50.0],
            modes: vec![Mode::Closed],
            range: None,
        });
        match s.validate() {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "sweep.variable"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn line_col_is_one_based() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
