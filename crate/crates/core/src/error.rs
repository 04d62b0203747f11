use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("input vector is constant")]
    ConstantInput,
    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("screening selected no features")]
    EmptyScreening,
    #[error("cholesky factorization of a {n}x{n} matrix failed at every jitter level")]
    CholeskyFailed { n: usize },
    #[error("scale at coordinate {coord} is not positive")]
    NonPositiveScale { coord: usize },
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("degrees of freedom {0} too small for a finite mean")]
    DfTooSmall(f64),
    #[error("column {0} has zero density under every model")]
    DegenerateColumn(usize),
    #[error("interval {index} has lower bound above upper bound")]
    CrossedBounds { index: usize },
}
