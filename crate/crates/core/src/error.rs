use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("family mismatch: cannot compare {0} with {1}")]
    FamilyMismatch(&'static str, &'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("non-finite target log density or gradient at theta = {theta:?}")]
    NonFiniteTarget { theta: Vec<f64> },

    #[error("non-finite gradient passed to optimizer at step {step}")]
    NonFiniteGradient { step: u64 },

    #[error("regression fit failed: {0}")]
    Fit(String),

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Diagnostic(#[from] crate::diagnostics::DiagnosticError),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
