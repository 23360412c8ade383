use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("{path}: no valid rows")]
    NoValidRows { path: PathBuf },

    #[error("embedding for `{item_id}` has dimension {found}, expected {expected}")]
    DimensionMismatch {
        item_id: String,
        expected: usize,
        found: usize,
    },

    #[error("embedding for `{item_id}` contains a non-finite value")]
    NonFinite { item_id: String },

    #[error("vector lengths differ ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("zero-norm vector")]
    ZeroVector,

    #[error("dataset has no embeddings")]
    MissingEmbeddings,

    #[error("insufficient support for {what}: need {needed}, found {found}")]
    InsufficientSupport {
        what: String,
        needed: usize,
        found: usize,
    },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("all {0} endpoints failed")]
    AllEndpointsFailed(usize),

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

    /// True for errors caused by the content of input data rather than by the
    /// environment or by caller-supplied parameters.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Malformed { .. }
                | Error::NoValidRows { .. }
                | Error::DimensionMismatch { .. }
                | Error::NonFinite { .. }
                | Error::MissingEmbeddings
                | Error::InsufficientSupport { .. }
                | Error::DegenerateVariance(_)
                | Error::NotFound(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
