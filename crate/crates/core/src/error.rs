//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures raised by potentials, solvers and bound evaluators.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A potential or integrand produced a NaN or infinite value.
    #[error("non-finite evaluation: {0}")]
    Eval(String),

    /// An iterative method hit its iteration cap.
    #[error("{method} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Invalid model parameters (non-SPD matrix, nonpositive constant, ...).
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A documented precondition of a formula does not hold.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dimensions of the inputs disagree.
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    /// Missing or empty input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// The Galerkin system could not be factorized.
    #[error("assembly failed: {0}")]
    Assembly(String),

    /// A predicted map lost strict monotonicity.
    #[error("map is not increasing in coordinate {coordinate} at node {node}")]
    Monotonicity { coordinate: usize, node: usize },

    /// File or parse failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Returns `Err(Error::Eval)` unless `v` is finite.
pub(crate) fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Eval(format!("{what} returned {v}")))
    }
}
