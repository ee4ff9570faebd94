//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    /// Malformed document; the underlying error carries line/column.
    #[error("instance parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("instance validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("uncertainty set error: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("master problem error: {0}")]
    Master(String),
    #[error("lp subsolver error: {0}")]
    Lp(String),
    #[error("branch called with no violated nonlinear term")]
    NoViolatedTerm,
}

#[derive(Debug, Error)]
pub enum RobustError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("safety-factor bracket never closed; increase s_bar")]
    IncreaseSBar,
}
