use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: expected width {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite values showed up during optimization.
    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("episode complete: step {step} reached horizon {horizon}")]
    EpisodeComplete { step: usize, horizon: usize },

    #[error("replay buffer is empty")]
    NotReady,

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("malformed metrics log: {0}")]
    Log(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
