use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the design engine.
///
/// Variants are grouped by who is at fault: bad numeric input, bad
/// configuration, malformed documents, inconsistent models or run state.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller-supplied data is unusable (non-finite weights, bad span, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// A configuration value is missing, unknown or out of range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A document could not be parsed. `row` is the zero-based record index when known.
    #[error("parse error{}: {message}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Parse { row: Option<usize>, message: String },

    /// A model's layer shapes or inputs do not line up.
    #[error("model error: {0}")]
    Model(String),

    /// An operation was attempted in a run state that does not allow it.
    #[error("state error: {0}")]
    State(String),

    /// Statistical estimator got degenerate data (e.g. zero variance).
    #[error("degenerate output: {0}")]
    Degenerate(String),

    /// A referenced candidate, run or stage does not exist.
    #[error("not found: {0}")]
    NotFound(String),

    /// Another writer currently holds the run.
    #[error("run is busy: {0}")]
    Busy(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(row: Option<usize>, message: impl Into<String>) -> Self {
        Error::Parse {
            row,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
