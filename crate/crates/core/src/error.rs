use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid-domain: {0}")]
    InvalidDomain(String),

    #[error("size-mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("grid-mismatch: {0}")]
    GridMismatch(String),

    #[error("eigensolver-failure: {0}")]
    Eigensolver(String),

    #[error("singular-system: {0}")]
    SingularSystem(String),

    #[error("non-convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("fit-window-too-short: {0}")]
    FitWindowTooShort(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
