use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unsupported fractional order s = {0}; expected 0 < s < 1")]
    UnsupportedOrder(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("step matrix singular at time step {step}")]
    StepFailure { step: usize },

    #[error("Newton iteration diverged at time step {step} (residual {residual:e})")]
    NewtonDivergence { step: usize, residual: f64 },

    #[error("forward solve for control {index} failed: {source}")]
    ForwardSolve {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("normal equations ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("probing system rank deficient; unresolved omega nodes {unresolved:?}")]
    RankDeficient { unresolved: Vec<usize> },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
