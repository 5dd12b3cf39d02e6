use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("chunks {0} and {1} do not overlap")]
    NoOverlap(usize, usize),

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("not enough points: need {needed}, got {got}")]
    NotEnoughPoints { needed: usize, got: usize },

    #[error("insufficient support: {0}")]
    InsufficientSupport(String),

    #[error("boundary window too short ({0} frames)")]
    WindowTooShort(usize),

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("key mismatch: {0}")]
    KeyMismatch(String),

    #[error("malformed container: {0}")]
    MalformedContainer(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        Error::MalformedContainer(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
