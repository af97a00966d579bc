//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller supplied a value that violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A referenced qubit or server does not exist.
    #[error("not found: {0}")]
    NotFound(String),

    /// A party received data inconsistent with the protocol state.
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    /// Key generation could not satisfy its constraints within the retry budget.
    #[error("key generation failed: {0}")]
    GenerationFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
