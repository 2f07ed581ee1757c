use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} qubits, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("capacity exceeded for {what}: {size} > limit {limit}")]
    Capacity {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("coefficient {value} on {word} exceeds |mu| <= 1 (construct with relaxed coefficients to allow)")]
    Coefficient { word: String, value: f64 },

    #[error("declared norm bound {declared} is below the operator norm {actual}")]
    NormBound { declared: f64, actual: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("scores {up} and {down} are not commensurable on a small integer lattice (tolerance {tol})")]
    Commensurability { up: f64, down: f64, tol: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
