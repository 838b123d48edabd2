//! Structured CLI errors: every failure path carries a machine-readable
//! record (code, message, locus) emitted to stderr with a nonzero exit.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub locus: String,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>, locus: &str) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
            locus: locus.into(),
        }
    }

    pub fn from_core(err: borrowlab_core::Error, locus: &str) -> Self {
        use borrowlab_core::Error as E;
        let code = match &err {
            E::DimensionMismatch { .. } => "dimension-mismatch",
            E::IndexOutOfRange { .. } => "index-out-of-range",
            E::DuplicateIndex { .. } => "duplicate-index",
            E::EmptyArm { .. } => "empty-arm",
            E::EmptyPool => "empty-pool",
            E::NonFinite { .. } => "non-finite",
            E::TooFewSamples { .. } => "too-few-samples",
            E::RankDeficient => "rank-deficient",
            E::Factorization { .. } => "factorization",
            E::DegenerateLabels => "degenerate-labels",
            E::KOutOfRange { .. } => "k-out-of-range",
            E::AllRowsFailed { .. } => "all-rows-failed",
            E::OracleTooNoisy { .. } => "oracle-too-noisy",
            E::TooManyFailures { .. } => "too-many-failures",
            E::SubsampleTooLarge { .. } => "subsample-too-large",
            E::Invalid(_) => "invalid",
        };
        Self::new(code, err.to_string(), locus)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {} ({})", self.code, self.message, self.locus)
    }
}

impl std::error::Error for CliError {}
