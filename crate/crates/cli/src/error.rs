use std::path::PathBuf;

use cuisine_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Stable error class for the structured message on stderr.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Core(CoreError::Config(_)) => "ConfigError",
            CliError::Io { .. } | CliError::Core(CoreError::Io { .. }) => "IoError",
            CliError::Json(_) => "ParseError",
            CliError::Core(e) => core_kind(e),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

fn core_kind(e: &CoreError) -> &'static str {
    match e {
        CoreError::MalformedRow { .. } => "MalformedRow",
        CoreError::NonMonotonicTime { .. } => "NonMonotonicTime",
        CoreError::OverlappingLabels(..) => "OverlappingLabels",
        CoreError::InvalidSession(_) => "InvalidSession",
        CoreError::OutOfRange { .. } => "OutOfRange",
        CoreError::SessionTooShort { .. } => "SessionTooShort",
        CoreError::EmptyTrainingSet => "EmptyTrainingSet",
        CoreError::Contract(_) => "ContractError",
        CoreError::MissingLabel { .. } => "MissingLabel",
        CoreError::ClassAbsent(_) => "ClassAbsent",
        CoreError::TooFewSamples { .. } => "TooFewSamples",
        CoreError::EmptyTestSet => "EmptyTestSet",
        CoreError::InvalidArgument(_) => "InvalidArgument",
        CoreError::Nn(_) => "NumericError",
        CoreError::Json(_) => "ParseError",
        CoreError::Config(_) => "ConfigError",
        CoreError::Io { .. } => "IoError",
    }
}

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
