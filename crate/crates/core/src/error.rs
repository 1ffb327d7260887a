use thiserror::Error;

/// Errors raised by the fitting library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The input does not determine a model (colinear points, rank deficiency).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Invalid or unreadable configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed text input.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn degenerate(msg: impl Into<String>) -> Error {
    Error::Degenerate(msg.into())
}
