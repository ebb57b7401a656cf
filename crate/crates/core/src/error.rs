use thiserror::Error;

/// Errors raised by the relaxation toolkit.
///
/// Coordinate indices in messages are 1-based, column indices 0-based.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("staircase count {count} exceeds the enumeration cap {cap}")]
    CapExceeded { count: String, cap: u128 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("ordering system violated at (i={i}, j={j}): {detail}")]
    Ordering { i: usize, j: usize, detail: String },
    #[error("point is not in {set}: {detail}")]
    Membership { set: &'static str, detail: String },
    #[error("invalid breakpoints: {0}")]
    Breakpoints(String),
    #[error("premise violated: {0}")]
    Premise(String),
    #[error("lp solver: {0}")]
    Lp(String),
    #[error("model: {0}")]
    Model(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
