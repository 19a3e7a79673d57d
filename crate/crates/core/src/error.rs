use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid tree index ({k},{j})")]
    InvalidIndex { k: usize, j: usize },

    #[error("level {n} exceeds the configured cap {cap}")]
    LevelCap { n: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero denominator: the witness is degenerate")]
    ZeroDenominator,

    #[error("differences do not have equal L2 norms")]
    UnequalNorms,

    #[error("sum of squared difference norms must equal 1, found {0}")]
    NormalizationPrecondition(String),

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("invalid martingale difference sequence: {0}")]
    InvalidMds(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("index set too small: found {found} indices above threshold, need {needed}")]
    InsufficientIndexSet { found: usize, needed: usize },

    #[error("pairing with the functional vanishes at difference {0}")]
    ZeroPairing(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
