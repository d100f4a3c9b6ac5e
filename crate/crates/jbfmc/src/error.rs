//! Crate-wide error type.

/// Errors produced by the estimator pipeline and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Matrix dimensions do not line up for the requested operation.
    #[error("dimension mismatch in {context}: {detail}")]
    DimensionMismatch {
        context: &'static str,
        detail: String,
    },

    /// A configuration value violates its documented domain.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Message passing produced a non-finite value.
    #[error("factorization diverged (non-finite value at sweep {sweep})")]
    Divergence { sweep: usize },

    /// The iterative SVD failed to converge.
    #[error("SVD did not converge")]
    SvdFailure,

    /// A matrix required to be full rank is numerically rank deficient.
    #[error("rank-deficient matrix: {0}")]
    RankDeficient(String),

    /// A metric is undefined for the given inputs (e.g. zero-norm reference).
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
