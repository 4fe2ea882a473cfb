use thiserror::Error;

/// Errors raised by the solvers and the configuration layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StiffnessFailure { t: f64, h: f64 },
    #[error("non-finite state at t = {0:e}")]
    NonFiniteState(f64),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("eigen-solver failed: {0}")]
    ConvergenceFailure(String),
    #[error("no monotone branch: {0}")]
    NoBranch(String),
    #[error("integration failed: {0}")]
    IntegrationFailure(String),
    #[error("tail window holds {got} samples, need at least {need}")]
    InsufficientTail { got: usize, need: usize },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::SizeMismatch { expected, got })
    }
}
