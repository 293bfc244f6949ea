use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("alphabet mismatch: expected size {expected}, got {got}")]
    AlphabetMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("symbol index {symbol} out of range for alphabet of size {alpha}")]
    SymbolOutOfRange { symbol: usize, alpha: usize },

    #[error("alphabet must contain at least {min} symbols, got {got}")]
    AlphabetTooSmall { min: usize, got: usize },

    #[error("machine has no output table")]
    MissingOutputTable,

    #[error("side-information sequence {0}")]
    SideInformation(String),

    #[error("time-invariant machine required, got period {period}")]
    PeriodicNotAllowed { period: usize },

    #[error("block length {block_len} does not divide sequence length {n}")]
    BlockLengthMismatch { block_len: usize, n: usize },

    #[error("block length {block_len} is not a multiple of machine period {period}")]
    BlockPeriodMismatch { block_len: usize, period: usize },

    #[error("no admissible block length: period {period} does not divide n = {n}")]
    NoAdmissibleBlockLength { period: usize, n: usize },

    #[error("state budget exceeded: {requested} states > cap {cap}")]
    StateBudgetExceeded { requested: u128, cap: u128 },

    #[error("enumeration budget exceeded: {requested} sequences > cap {cap}")]
    EnumerationBudgetExceeded { requested: u128, cap: u128 },

    #[error("key-space budget exceeded: {requested} keys > cap {cap}")]
    KeySpaceBudgetExceeded { requested: u128, cap: u128 },

    #[error("counting budget exceeded: residual-count space {requested} > cap {cap}")]
    CountBudgetExceeded { requested: u128, cap: u128 },

    #[error("sequence is not a member of the type class")]
    NotInTypeClass,

    #[error("rank out of range for type class of size {size}")]
    RankOutOfRange { size: String },

    #[error("empty count table")]
    EmptyCountTable,

    #[error("malformed bitstream: {0}")]
    MalformedBitstream(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("invalid machine description at {path}: {reason}")]
    InvalidFsmSpec { path: String, reason: String },

    #[error("invalid run-length parameters: d = {d} > k = {k}")]
    InvalidRunLength { d: usize, k: usize },

    #[error("key does not belong to the scheme's key space: {0}")]
    KeyOutOfRange(String),

    #[error("plaintext outside the scheme's domain: {0}")]
    SchemeDomain(String),

    #[error("inconsistent scenario: {0}")]
    InconsistentScenario(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
