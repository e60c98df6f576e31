use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SgpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SgpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("no model: {0}")]
    NoModel(String),

    #[error("empty training batch")]
    EmptyBatch,

    #[error("training loss became non-finite at epoch {epoch} (pair {pair})")]
    NonFiniteLoss { epoch: usize, pair: usize },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("ground-truth audit violation: {0}")]
    Audit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SgpError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SgpError::InvalidInput(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        SgpError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        SgpError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
