use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside the unit interval [0, 1)")]
    Domain { value: f64 },

    #[error("component {index} lies on a discontinuity of the local map (x = {value})")]
    OnBoundary { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid blocks: {0}")]
    InvalidBlocks(String),

    #[error("hypothesis violated: coupling {gamma} must be below 1 - lambda = {limit}")]
    Hypothesis { gamma: f64, limit: f64 },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },

    #[error("eigen-iteration did not converge after {iterations} iterations (residual {residual:e})")]
    EigenNonConvergence { iterations: usize, residual: f64 },

    #[error("orbit is not periodic: step {step} misses by {mismatch:e}")]
    NotPeriodic { step: usize, mismatch: f64 },

    #[error("memory budget exceeded: {0}")]
    MemoryBudget(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown figure id `{0}`")]
    UnknownFigure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the error stems from user-supplied configuration rather than
    /// from a numerical procedure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidParameter(_)
                | Error::InvalidBlocks(_)
                | Error::Hypothesis { .. }
                | Error::UnknownFigure(_)
                | Error::Domain { .. }
        )
    }
}
