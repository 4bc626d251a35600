use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("self-loop on node {label:?} at line {line}")]
    SelfLoop { label: String, line: usize },

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("topology is disconnected: {unreachable} unreachable pairs, e.g. {examples:?}")]
    Disconnected {
        unreachable: usize,
        examples: Vec<(usize, usize)>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coverage cannot be satisfied: {0}")]
    Coverage(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("link weights requested from file but {0} carries none")]
    MissingWeights(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
