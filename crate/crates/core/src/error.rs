//! Crate-wide error type.
//!
//! Numeric routines reject bad inputs loudly instead of clamping or guessing:
//! out-of-bounds states, dimension mismatches, and non-convergent solvers all
//! surface as distinct variants with enough context to diagnose the call site.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input vector had the wrong length for the operation.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A value violated a domain precondition (bounds, positivity, ...).
    InvalidInput { what: &'static str, detail: String },
    /// An iterative solver failed to converge within its iteration budget.
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    /// An iterative solver's residual grew instead of shrinking.
    Diverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    /// A serialized artifact could not be parsed.
    Parse { line: usize, detail: String },
    /// Wrapper for I/O failures while reading or writing artifacts.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected dimension {expected}, got {got}"),
            Error::InvalidInput { what, detail } => write!(f, "{what}: {detail}"),
            Error::NoConvergence {
                what,
                iterations,
                residual,
            } => write!(
                f,
                "{what}: no convergence after {iterations} iterations (last residual {residual:e})"
            ),
            Error::Diverged {
                what,
                iterations,
                residual,
            } => write!(
                f,
                "{what}: diverged at iteration {iterations} (residual {residual:e})"
            ),
            Error::Parse { line, detail } => write!(f, "parse error at line {line}: {detail}"),
            Error::Io(detail) => write!(f, "io error: {detail}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
