use thiserror::Error;

/// Broad failure category, used by front ends to pick an exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid arguments or configuration.
    Usage,
    /// Input data is malformed or unsuitable.
    Data,
    /// A numerical routine could not produce a trustworthy value.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("series is empty")]
    EmptySeries,

    #[error("non-finite value at position {position} (1-based)")]
    NonFiniteValue { position: usize },

    #[error("no admissible changepoint candidates for n = {n}, delta = {delta}")]
    EmptyRange { n: usize, delta: f64 },

    #[error("design sums overflow for n = {n} (supported n <= {max})")]
    Overflow { n: usize, max: usize },

    #[error("normal equations are singular at n = {n}, k = {k}")]
    SingularSystem { n: usize, k: usize },

    #[error("numerically unstable evaluation at n = {n}, k = {k}, l = {l:?}")]
    NumericalInstability { n: usize, k: usize, l: Option<usize> },

    #[error("arguments out of order: k = {k} must not exceed l = {l}")]
    ArgumentOrder { k: usize, l: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("zero residual variance at k = {k}; statistic undefined")]
    DegenerateSeries { k: usize },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("covariance factorization failed even with jitter {jitter:e}")]
    FactorizationFailure { jitter: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("labels not strictly increasing at line {line}")]
    NonMonotoneLabels { line: u64 },

    #[error("gap in labels at line {line}: expected {expected}, found {found}")]
    GapInLabels { line: u64, expected: i64, found: i64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_)
            | Error::ConfigMismatch(_)
            | Error::ArgumentOrder { .. }
            | Error::Domain(_) => ErrorKind::Usage,
            Error::SingularSystem { .. }
            | Error::NumericalInstability { .. }
            | Error::FactorizationFailure { .. }
            | Error::Overflow { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
