use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Bad magic, unsupported version or dtype, malformed header fields.
    #[error("format error: {0}")]
    Format(String),

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncation { expected: u64, actual: u64 },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("class {class} has {size} members, {needed} requested")]
    DeficientClass {
        class: usize,
        size: usize,
        needed: usize,
    },

    #[error("round {round}: training set spans {classes} class(es), need at least 2")]
    DegenerateModel { round: usize, classes: usize },

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize },

    #[error("selection document: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for the validation classes the loaders report on bad input
    /// (everything except I/O failures).
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Data(_))
    }
}
