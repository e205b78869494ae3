use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures surfaced by the pipeline stages.
///
/// Variants are grouped so callers can tell bad input (a malformed file, a
/// missing column) apart from numerical failures that happen mid-computation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}: {message}")]
    BadRow {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{source_name}: line {line}: {message}")]
    BadLine {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("vocabulary is empty after filtering")]
    EmptyVocabulary,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("co-occurrence matrix has no nonzero entries")]
    ZeroCooccurrence,

    #[error("non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("non-finite objective at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("keyword `{0}` is not in the vocabulary")]
    UnknownKeyword(String),

    #[error("dates are not sorted ascending at position {0}")]
    UnsortedDates(usize),

    #[error("indicator and price series do not overlap")]
    EmptyOverlap,

    #[error("column `{0}` is constant on the training range")]
    ConstantColumn(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular regressor cross-product: {0}")]
    Singular(String),

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("zero target at index {index}; mape is undefined")]
    ZeroTarget { index: usize },

    #[error("every boosting round was discarded; relative-error threshold {phi} is too small")]
    AllRoundsDiscarded { phi: f64 },

    #[error("degenerate train/test split: {0}")]
    DegenerateSplit(String),

    #[error("forecast reports are not aligned: {0}")]
    Misaligned(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by unreadable or malformed inputs rather than by
    /// the computation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Csv { .. }
                | Error::MissingColumn { .. }
                | Error::BadRow { .. }
                | Error::BadLine { .. }
                | Error::Json(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
