use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("fold {fold} contains a single treatment arm; resplit with a different seed or fewer folds")]
    SingleArmFold { fold: usize },

    #[error("absolute continuity violated: {0}")]
    AbsoluteContinuity(String),

    #[error("conjugate argument outside the finite domain at row {row} (t = {t})")]
    InfinitePseudoOutcome { row: usize, t: f64 },

    #[error("solver did not converge after {iterations} iterations: {detail}")]
    Convergence { iterations: usize, detail: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
