use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("control at step {step} violates its constraint set")]
    ConstraintViolation { step: usize },

    #[error("expected {expected} controls for the horizon, got {got}")]
    HorizonMismatch { expected: usize, got: usize },

    #[error("cost at step {step} is negative or NaN ({value})")]
    InvalidCost { step: usize, value: f64 },

    #[error("finite candidate set is empty")]
    EmptyCandidateSet,

    #[error("constraint set is empty: {0}")]
    EmptyConstraintSet(String),

    #[error("grid has {count} points, above the limit of {limit}")]
    GridTooLarge { count: u128, limit: u128 },

    #[error("problem reports non-smooth costs; use grid search or cross-entropy")]
    NonSmooth,

    #[error("objective is infinite at the initial controls")]
    InfeasibleInit,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("model has a zero weight vector, so there is no decision boundary")]
    ZeroModel,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
