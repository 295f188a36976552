//! Crate-wide error type and result alias.

use thiserror::Error;

/// Errors produced by the library.
///
/// The CLI maps these onto process exit codes: config errors exit 2,
/// numeric failures exit 3, and I/O failures exit 4.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or layer dimension did not match what the operation expected.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    /// An operation was called in the wrong order (e.g. backward without a
    /// recorded forward pass).
    #[error("invalid state: {0}")]
    State(String),

    /// Invalid configuration or arguments.
    #[error("config error: {0}")]
    Config(String),

    /// A numeric failure (NaN/Inf, divergence) with enough context to locate it.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed input data (CSV rows, checkpoints).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(context: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// Exit code for the CLI: 2 config, 3 numeric, 4 I/O and everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Shape { .. } | Error::State(_) => 2,
            Error::Numeric(_) => 3,
            Error::Io(_) | Error::Parse(_) => 4,
        }
    }
}
