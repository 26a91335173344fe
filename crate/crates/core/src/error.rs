//! Crate-wide error type.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by solvers, networks, data generation, and file formats.
#[derive(Debug)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// A precondition on an argument was violated.
    Contract(String),
    /// A numeric procedure failed (singular system, non-convergence, non-finite values).
    Numeric(String),
    /// Config text could not be parsed; carries the 1-based line number.
    Config { line: usize, message: String },
    /// Container file is malformed or truncated.
    Container(String),
    /// Training diverged; carries the 1-based epoch at which the loss became non-finite.
    Training { epoch: usize, message: String },
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => write!(
                f,
                "shape mismatch in {op}: {}x{} vs {}x{}",
                lhs.0, lhs.1, rhs.0, rhs.1
            ),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Config { line, message } => write!(f, "config error at line {line}: {message}"),
            Error::Container(msg) => write!(f, "container error: {msg}"),
            Error::Training { epoch, message } => {
                write!(f, "training error at epoch {epoch}: {message}")
            }
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

/// Shorthand for contract violations.
pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

/// Shorthand for numeric failures.
pub(crate) fn numeric(msg: impl Into<String>) -> Error {
    Error::Numeric(msg.into())
}
