//! Error type shared by the whole crate.

use thiserror::Error;

/// Errors produced by dataset handling, model fitting, and estimation.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for pool of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("duplicate borrowed index {index}")]
    DuplicateIndex { index: usize },

    #[error("{arm} arm is empty")]
    EmptyArm { arm: &'static str },

    #[error("external pool is empty")]
    EmptyPool,

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("normal equations are rank deficient (set lambda_reg > 0)")]
    RankDeficient,

    #[error("factorization failed; condition estimate {cond_estimate:.3e}")]
    Factorization { cond_estimate: f64 },

    #[error("degenerate logistic fit: all labels identical")]
    DegenerateLabels,

    #[error("k = {k} outside 0..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("all rows of the MSE sweep failed; first error: {first}")]
    AllRowsFailed { first: String },

    #[error("Monte Carlo oracle too noisy: se {se:.3e} exceeds budget {budget:.3e}")]
    OracleTooNoisy { se: f64, budget: f64 },

    #[error("too many replication failures: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("subsample size {requested} exceeds available controls {available}")]
    SubsampleTooLarge { requested: usize, available: usize },

    #[error("{0}")]
    Invalid(String),
}

/// Convenient alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
