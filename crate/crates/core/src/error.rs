//! Error type shared across the pipeline.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by dataset handling, detection, scoring and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector/matrix lengths do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input data violates a structural invariant (duplicate names, non-binary
    /// labels, non-numeric cells, non-monotonic timestamps, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// `standardize` called on an already-standardized dataset.
    #[error("dataset is already standardized")]
    AlreadyStandardized,

    /// Feature scoring needs both an anomalous and a normal window.
    #[error("degenerate anomaly window: {0}")]
    DegenerateWindow(String),

    /// Every ensemble candidate was skipped.
    #[error("no usable detection among ensemble candidates")]
    NoDetection,

    /// Ground truth flags no feature, so ranking metrics are undefined.
    #[error("ground truth flags no anomalous feature")]
    NoAnomalousFeatures,

    /// An operation got an empty collection it cannot work with.
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file failed to parse; `line` is 1-based (0 = header/preamble).
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    /// True for errors caused by unreadable or malformed input files, as
    /// opposed to failures inside the pipeline itself. The CLI maps the former
    /// to exit code 2 and the latter to 3.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::InvalidData(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
