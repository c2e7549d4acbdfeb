use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("unsupported model variant: {0}")]
    UnsupportedVariant(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("fit did not converge after {evaluations} evaluations (best objective {best_objective:e})")]
    NonConvergence {
        evaluations: usize,
        best_objective: f64,
        best_parameters: Vec<f64>,
    },

    #[error("age grid too small: {0}")]
    GridTooSmall(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
