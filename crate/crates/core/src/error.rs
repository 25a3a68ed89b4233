use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("input is empty: {0}")]
    EmptyInput(String),

    #[error("no user survives {min_count}-core filtering")]
    EmptyDataset { min_count: usize },

    #[error("user {user}: sequence has {len} items, need at least {need}")]
    Split {
        user: String,
        len: usize,
        need: usize,
    },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration for `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("training diverged at {0}")]
    Diverged(String),

    #[error("evaluation protocol error: {0}")]
    Protocol(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
