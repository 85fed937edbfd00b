use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is outside its domain: {reason}")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive step size fell below the floor; usually means the
    /// sequestration term has become stiff at the requested tolerance.
    #[error(
        "step size underflow at t = {t:.6} min (h = {h:.3e}); the system is stiff at this \
         tolerance, relax rtol/atol or use the semi-implicit method"
    )]
    Stiffness { t: f64, h: f64 },

    #[error("integrator failure at t = {t:.6} min: component {index} = {value:.3e} is negative")]
    Negativity { t: f64, index: usize, value: f64 },

    #[error("no steady state found after {iterations} iterations (residual {residual:.3e})")]
    NoSteadyState { iterations: usize, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("population `{0}` is empty")]
    EmptyPopulation(String),

    #[error(
        "growth curves do not intersect inside [{d_min}, {d_max}] min^-1; dilution switching \
         cannot favour both strains, use the dual-chamber topology"
    )]
    ActuationInfeasible { d_min: f64, d_max: f64 },

    #[error("geometry does not fit the domain: {0}")]
    Geometry(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 for configuration problems, 2 for runtime
    /// failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            1
        } else {
            2
        }
    }

    /// True for errors that stem from the configuration rather than a run.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::Validation { .. }
            | Error::Config(_)
            | Error::ParameterDomain { .. }
            | Error::Geometry(_)
            | Error::ActuationInfeasible { .. } => true,
            Error::Scenario { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
