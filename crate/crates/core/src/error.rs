//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by numerical routines, data validation, and run drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// Two quantities that must agree in dimension do not.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix factorization failed even after jitter escalation, or a
    /// linear system is too ill-conditioned to solve reliably.
    #[error("conditioning failure: {0}")]
    Conditioning(String),

    /// Hyperparameter optimization failed to produce a usable model.
    #[error("model fit failure: {0}")]
    FitFailure(String),

    /// The operation requires a capability the implementation does not
    /// provide (e.g. surrogate derivatives beyond second order).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A basis term needs a derivative that the observation does not carry.
    #[error("missing derivative data: {0}")]
    MissingDerivative(String),

    /// The candidate pool has fewer available points than requested.
    #[error("candidate pool exhausted: requested {requested}, available {available}")]
    PoolExhausted { requested: usize, available: usize },

    /// A finite-difference scheme violated its stability bound or the
    /// solution blew up during time stepping.
    #[error("numerical instability: {0}")]
    Instability(String),

    /// A data source failed to produce observations.
    #[error("data source failure: {0}")]
    DataSource(String),

    /// Non-finite value encountered where finite data is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}
