use thiserror::Error;

/// Errors raised by the simulation, metrology and optimization layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate outcome distribution: {0}")]
    DegenerateDistribution(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("measurement carries no information beyond the prior (ratio {ratio:.6})")]
    NoInformation { ratio: f64 },

    #[error("mean spin vanishes, squeezing orientation is undefined")]
    UndefinedOrientation,

    #[error("no convergence after {iterations} iterations (best bmse {best_bmse:.6e})")]
    ConvergenceFailure { iterations: usize, best_bmse: f64 },

    #[error("evaluator failure: {0}")]
    EvaluatorFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} must be finite, got {value}")))
    }
}
