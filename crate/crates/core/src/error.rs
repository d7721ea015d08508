use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coordinate index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("matrix is not symmetric at ({i}, {j}): {a} vs {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },

    #[error("negative diagonal entry Q[{i},{i}] = {value}")]
    NegativeDiagonal { i: usize, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("coordinate Lipschitz constant is zero; steplengths are undefined")]
    ZeroLipschitz,

    #[error("OSC modulus unavailable: {0}")]
    OscUnavailable(String),

    #[error("prox weight must be nonnegative, got {0}")]
    NegativeKappa(f64),

    #[error("invalid regularizer: {0}")]
    InvalidRegularizer(String),

    #[error("rho must exceed {min}, got {rho}")]
    InvalidRho { rho: f64, min: f64 },

    #[error("delay bound violated: 4e*Lambda*(tau+1)^2 = {lhs} > sqrt(n) = {rhs}")]
    DelayBoundViolated { lhs: f64, rhs: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("objective became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("reference solver did not converge within {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("{threads} threads requested but the problem has only {n} coordinates")]
    TooManyThreads { threads: usize, n: usize },

    #[error("support size {s} exceeds dimension {n}")]
    SupportTooLarge { s: usize, n: usize },

    #[error("instance needs {required} bytes, budget is {budget} bytes")]
    MemoryBudget { required: u64, budget: u64 },

    #[error("malformed schedule script: {0}")]
    MalformedScript(String),

    #[error("linear-rate certification needs an OSC modulus l > 0")]
    MissingOscModulus,

    #[error("malformed instance file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
