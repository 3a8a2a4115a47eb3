use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("phase overrun at h={h}: lambda*h = {needed} exceeds period {period}")]
    PhaseOverrun { h: usize, needed: u64, period: usize },

    #[error("distribution does not sum to one (sum = {0})")]
    NotNormalized(f64),

    #[error("matrix entry ({row}, {col}) has modulus {modulus} > 1")]
    EntryModulus { row: usize, col: usize, modulus: f64 },

    #[error("node count {n} exceeds the dense-matrix limit {limit}")]
    TooManyNodes { n: usize, limit: usize },

    #[error("period {0} exceeds the configured cap {1}")]
    PeriodOverflow(u128, u64),

    #[error("base schedule search exhausted {0} retries; lambda is likely too small")]
    RetriesExhausted(usize),

    #[error("forward and backward distributions are disjointly supported (eta = 0)")]
    DisjointSupport,

    #[error("discrepancy bound violated: {disc} > {bound}")]
    BoundViolation { disc: f64, bound: f64 },

    #[error("instance too large for explicit accounting: {0}")]
    TooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
