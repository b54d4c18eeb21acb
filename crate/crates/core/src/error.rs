use thiserror::Error;

/// Errors produced by the library.
///
/// The variants fall into three families that the CLI maps onto exit codes:
/// bad input (domain, config, site and shape errors), numerical contract
/// breaches, and the explicit-vector dimension guard.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension guard: {what} needs dimension {dim}, limit is {limit}")]
    DimensionGuard {
        what: &'static str,
        dim: u128,
        limit: u128,
    },

    #[error("invalid site index {site} for a register of {n_sites} sites")]
    InvalidSite { site: usize, n_sites: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("premise violated: {0}")]
    Premise(String),

    #[error("numerical contract violated: {0}")]
    Numerical(String),

    #[error("estimator singular: sin(2Mθ) = {0:e}")]
    EstimatorSingularity(f64),

    #[error("config error at line {line}, field `{field}`: {msg}")]
    Config {
        line: usize,
        field: String,
        msg: String,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
