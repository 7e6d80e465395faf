use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the calibration library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    /// A malformed data row; `row` is 1-based over data rows (header excluded).
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("empty input")]
    Empty,

    #[error("both classes are required (positives: {positives}, negatives: {negatives})")]
    OneClass { positives: usize, negatives: usize },

    #[error("class {label} has {count} samples, need at least {required}")]
    TooFewSamples {
        label: u8,
        count: usize,
        required: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite evidence lower bound at iteration {iteration}")]
    NonFiniteElbo { iteration: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_score(score: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&score) {
        Ok(score)
    } else {
        Err(Error::ScoreOutOfRange(score))
    }
}
