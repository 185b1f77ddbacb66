use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp is earlier than the previous row")]
    Ordering { line: usize },
    #[error("line {line}: duplicate timestamp")]
    Duplicate { line: usize },
    #[error("field `{0}` has no observed values and cannot be imputed")]
    Unimputable(&'static str),
    #[error("field `{0}` still contains missing values")]
    Missing(&'static str),
    #[error("insufficient data: need {needed}, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is singular")]
    Singular,
    #[error("non-finite value in {0}")]
    Numeric(&'static str),
    #[error("{what} did not converge within {iterations} iterations")]
    Convergence {
        what: &'static str,
        iterations: usize,
    },
    #[error("training diverged at step {step}")]
    Training { step: usize },
    #[error("series has zero variance")]
    DegenerateSeries,
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Broad failure classes, used by the command line for its exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Convergence,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Convergence { .. } | Error::Training { .. } => ErrorClass::Convergence,
            Error::Config(_) | Error::InvalidParameter(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}
