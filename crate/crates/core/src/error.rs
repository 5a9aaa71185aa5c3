use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("method {method} infeasible: {reason}")]
    MethodInfeasible { method: &'static str, reason: String },

    #[error("support too large for exact LP: {size} atoms (limit {limit})")]
    OversizeSupport { size: usize, limit: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("simulation blew up on path {path} at step {step}: {reason}")]
    BlowUp { path: usize, step: usize, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("linear program failure: {0}")]
    Lp(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        LabError::Domain(msg.into())
    }
}
