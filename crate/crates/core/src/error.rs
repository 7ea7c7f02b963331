use std::path::PathBuf;

use serde::Serialize;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch on {axis}: expected {expected}, got {got}")]
    Dimension {
        axis: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value at parameter {index}: {detail}")]
    Numerical { index: usize, detail: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("value {value} outside [{min}, {max}] for {what}")]
    Range {
        what: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("insufficient data: need at least {needed} frames, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("timestep {t} outside [1, {steps}]")]
    Schedule { t: usize, steps: usize },

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("cost reconciliation failed on term {term}: counted {counted}, expected {expected}")]
    Reconciliation {
        term: String,
        counted: f64,
        expected: f64,
    },

    #[error("experiment {id}: {source}")]
    Experiment {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn dim(axis: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            axis: axis.into(),
            expected,
            got,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Config(_) => "config",
            Error::Numerical { .. } => "numerical",
            Error::EmptyInput(_) => "empty_input",
            Error::Range { .. } => "range",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::Input(_) => "input",
            Error::Schedule { .. } => "schedule",
            Error::Diverged { .. } => "diverged",
            Error::Reconciliation { .. } => "reconciliation",
            Error::Experiment { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub fn report(&self) -> ErrorReport {
        let experiment = match self {
            Error::Experiment { id, .. } => Some(id.clone()),
            _ => None,
        };
        ErrorReport {
            error: self.kind(),
            message: self.to_string(),
            experiment,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
}
