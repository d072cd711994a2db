use thiserror::Error;

/// Coarse classification used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Solver,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{field}: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("consumer-inertia assumption violated: {0}")]
    InertiaViolated(String),

    #[error("degenerate chain: 1 - lambda_aa + lambda_na = 0, no stationary belief")]
    DegenerateChain,

    #[error("degenerate costs: c_ha must exceed c_hn")]
    DegenerateCosts,

    #[error("no self-consistent threshold case: {0}")]
    NoConsistentCase(String),

    #[error("bisection bracket failed: {0}")]
    NoRoot(String),

    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error("policy is not a threshold policy: {0}")]
    NonThresholdStructure(String),

    #[error("cost {cost} has zero likelihood under both HP hypotheses")]
    ZeroLikelihood { cost: f64 },

    #[error("zero evidence for observed cost {cost}: distributions do not match the data")]
    ZeroEvidence { cost: f64 },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), message: message.into() }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. }
            | Error::InertiaViolated(_)
            | Error::DegenerateChain
            | Error::DegenerateCosts
            | Error::ConfigMismatch(_) => ErrorKind::Validation,
            Error::NoConsistentCase(_)
            | Error::NoRoot(_)
            | Error::NonConvergence { .. }
            | Error::NonThresholdStructure(_)
            | Error::ZeroLikelihood { .. }
            | Error::ZeroEvidence { .. } => ErrorKind::Solver,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => ErrorKind::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
