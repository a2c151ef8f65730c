use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index ({row}, {col}) out of range for a {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("degenerate triangle with area {area:e}")]
    DegenerateElement { area: f64 },

    #[error(
        "linear solve failed at step {step} (time {time}): {iterations} iterations, \
         relative residual {residual:e}"
    )]
    SolverFailed {
        step: usize,
        time: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("quadrature did not stabilise after {levels} refinements (last change {change:e})")]
    QuadratureNotConverged { levels: usize, change: f64 },

    #[error("reference function has zero norm")]
    ZeroReference,

    #[error("need at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("non-positive value {value} at index {index} cannot be log-transformed")]
    NonPositive { index: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
