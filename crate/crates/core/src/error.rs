use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{path}:{line}: timestamp not strictly increasing")]
    NonMonotonicTime { path: PathBuf, line: u64 },

    #[error("label intervals {0} and {1} overlap")]
    OverlappingLabels(usize, usize),

    #[error("invalid session: {0}")]
    InvalidSession(String),

    #[error("requested span [{start}, {end}] s exceeds stream extent [{first}, {last}] s")]
    OutOfRange {
        start: f64,
        end: f64,
        first: f64,
        last: f64,
    },

    #[error("session lasts {duration} s, shorter than one {window_len} s window")]
    SessionTooShort { duration: f64, window_len: f64 },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("training contract violated: {0}")]
    Contract(String),

    #[error("window {index} has no food label")]
    MissingLabel { index: usize },

    #[error("class {0} has no training windows")]
    ClassAbsent(usize),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Nn(#[from] cuisine_nn::NnError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CoreError {
    let path = path.into();
    move |source| CoreError::Io { path, source }
}
