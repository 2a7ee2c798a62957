use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (leading minor {minor} failed)")]
    NotPositiveDefinite { minor: usize },

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("EP site precisions oscillate at site {site}")]
    OscillationDetected { site: usize },

    #[error("all importance weights of the marginal-likelihood estimate are zero")]
    AllWeightsDegenerate,

    #[error("total importance weight is zero")]
    ZeroTotalWeight,

    #[error("objective is not finite at the current point")]
    NonFiniteObjective,

    #[error("negative Hessian could not be repaired to positive definite")]
    NotNegativeDefinite,

    #[error("tuning failed after {batches} batches (last rate {rate:.3}, target {target:.3})")]
    TuningFailed { batches: usize, rate: f64, target: f64 },

    #[error("slice shrinkage exhausted after {0} iterations")]
    ShrinkageExhausted(usize),

    #[error("grid point {0} lies before the first observation of a trace")]
    GridBeforeFirstObservation(u64),

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
