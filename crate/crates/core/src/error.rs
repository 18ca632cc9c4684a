use thiserror::Error;

pub type Result<T> = std::result::Result<T, QslError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QslError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite control value {value} at interval {index}")]
    NonFiniteField { index: usize, value: f64 },

    #[error("non-finite field update at interval {index} (step weight {step_weight})")]
    NonFiniteUpdate { index: usize, step_weight: f64 },

    #[error("Mandelstam-Tamm bound undefined: energy variance vanishes for non-parallel states")]
    BoundUndefined,

    #[error("grid too coarse: segment {segment} receives {intervals} intervals, need at least {required}")]
    GridTooCoarse {
        segment: usize,
        intervals: usize,
        required: usize,
    },

    #[error("history too short: {len} entries, need at least {required}")]
    HistoryTooShort { len: usize, required: usize },

    #[error("scan bracket invalid: {0}")]
    BracketInvalid(String),

    #[error("convergence criterion unstable: stalled at T={stalled_at} above converging T={converging_at}")]
    CriterionUnstable { stalled_at: f64, converging_at: f64 },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
}
