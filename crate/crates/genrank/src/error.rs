//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes that cannot be combined (matmul inner dims, grad vs value, ...).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An operation that needs at least one element got none.
    #[error("empty sequence: {0}")]
    EmptySequence(String),

    /// A caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A malformed input file; always names the file and line.
    #[error("{file}:{line}: {message}")]
    Data {
        file: String,
        line: usize,
        message: String,
    },

    /// Non-finite loss, singular statistics, and similar numeric failures.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Bad configuration or command usage.
    #[error("invalid config: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 1 usage/config, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 1,
            Error::Data { .. } | Error::Io(_) | Error::EmptySequence(_) => 2,
            Error::Numeric(_) | Error::Dimension(_) => 3,
        }
    }

    pub fn data(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
