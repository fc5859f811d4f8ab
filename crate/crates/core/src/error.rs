use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value produced at iteration {t}{}", worker.map(|k| format!(" by worker {k}")).unwrap_or_default())]
    NonFinite { t: u64, worker: Option<usize> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown problem name `{0}`")]
    UnknownProblem(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("config error: {0}")]
    Config(String),

    #[error("solver did not reach tolerance: residual {achieved:e} after {iterations} iterations")]
    NotConverged { achieved: f64, iterations: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
