//! Error type shared by all modules.
//!
//! The three variants map one-to-one onto the CLI exit codes: bad input data
//! or configuration (2), a numerical procedure that failed to produce a usable
//! result (3), and a violated internal invariant, which always indicates a bug
//! (4).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerics(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
