//! Error type shared across the crate.

use thiserror::Error;

/// Broad failure class, used by callers (e.g. the CLI) to map errors to
/// exit codes without matching on every variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Problem with inputs: files, schemas, shapes, degenerate data.
    Data,
    /// Numerical failure: singular matrices, non-PSD covariances, divergence.
    Numerical,
}

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {message}")]
    Csv { path: String, message: String },

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("required columns missing: {0:?}")]
    MissingColumns(Vec<String>),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("timestamps not monotone non-decreasing at row {row} ({prev} -> {next})")]
    NonMonotoneTimestamps { row: usize, prev: f64, next: f64 },

    #[error("series too short: need at least {need}, got {got}")]
    TooShort { need: usize, got: usize },

    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("column `{0}` has no usable values")]
    AllMissing(String),

    #[error("series are not on a common grid: {0}")]
    GridMismatch(String),

    #[error("missing values present in {0}; interpolate or fill first")]
    MissingValues(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model spec invalid: {0}")]
    InvalidSpec(String),

    #[error("fixed entry mismatch in {matrix}[{row}][{col}]: spec fixes {fixed}, params hold {actual}")]
    FixedEntryMismatch {
        matrix: String,
        row: usize,
        col: usize,
        fixed: f64,
        actual: f64,
    },

    #[error("unsupported constraint pattern for estimation: {0}")]
    Unsupported(String),

    #[error("innovation covariance singular at time step {time}")]
    SingularInnovation { time: usize },

    #[error("matrix not positive semi-definite: {0}")]
    NotPsd(String),

    #[error("transition matrix not stationary (spectral radius {0} >= 1)")]
    NonStationary(f64),

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("fits were computed on different data (fingerprint mismatch)")]
    DataMismatch,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Classify the error for exit-code mapping.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::SingularInnovation { .. }
            | Error::NotPsd(_)
            | Error::NonStationary(_)
            | Error::NotConverged(_)
            | Error::Numerical(_) => ErrorCategory::Numerical,
            _ => ErrorCategory::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
