//! Error types shared across the crate.

use thiserror::Error;

/// Unified error type for all library operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A NaN or infinity showed up where finite values are required.
    #[error("non-finite value: {0}")]
    Numeric(String),

    /// Invalid configuration; the message names the offending field.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset could not be loaded or does not match expectations.
    #[error("data error: {0}")]
    Data(String),

    /// A verification run (oracle check, determinism check) failed.
    #[error("check failed: {0}")]
    Check(String),

    /// An operation precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code associated with this error kind.
    ///
    /// 2 = config error, 3 = data error, 4 = check failure, 1 = anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Check(_) => 4,
            _ => 1,
        }
    }
}
