use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numeric health error: {0}")]
    NumericHealth(String),

    #[error("partitioning error: {0}")]
    Partition(String),

    #[error("aggregation error: parameter `{param}`: {message}")]
    Aggregation { param: String, message: String },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("contamination: external client `{0}` participated in training")]
    Contamination(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Coarse category used by the CLI to pick an exit status.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Contamination(_) => ErrorCategory::Config,
            Error::Parse { .. }
            | Error::Data(_)
            | Error::Partition(_)
            | Error::Evaluation(_)
            | Error::Serde(_) => ErrorCategory::Data,
            Error::Dimension(_) | Error::NumericHealth(_) | Error::Aggregation { .. } => {
                ErrorCategory::Numeric
            }
            Error::Io { .. } => ErrorCategory::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Io => 5,
        }
    }
}
