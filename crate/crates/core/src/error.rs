use thiserror::Error;

/// Errors raised while reading and pre-processing a SAM file.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamError {
    #[error("line {line}: malformed header: {msg}")]
    Header { line: usize, msg: String },
    #[error("line {line}: non-numeric cell {cell:?}")]
    NonNumeric { line: usize, cell: String },
    #[error("line {line}: expected {expected} cells, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate account name {0:?}")]
    DuplicateAccount(String),
    #[error("row {account:?}: declared rowSUM {declared} but cells sum to {computed}")]
    RowSum {
        account: String,
        declared: f64,
        computed: f64,
    },
    #[error("column {account:?}: declared colSUM {declared} but cells sum to {computed}")]
    ColSum {
        account: String,
        declared: f64,
        computed: f64,
    },
    #[error("row {account:?}: negative cell {value} outside a tax row")]
    NegativeCell { account: String, value: f64 },
    #[error("account {account:?}: {msg}")]
    Role { account: String, msg: String },
    #[error("producer column {0:?} has zero total")]
    ZeroColumn(String),
    #[error("GFCF column has zero total")]
    ZeroGfcf,
    #[error("invalid agent count {0}")]
    AgentCount(i64),
}

/// Errors raised by the simulation engine and its persistence layer.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Sam(#[from] SamError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("snapshot format version {found} is not supported (expected {expected})")]
    SnapshotVersion { found: String, expected: String },
    #[error("snapshot checksum mismatch")]
    SnapshotChecksum,
    #[error("snapshot truncated or malformed: {0}")]
    SnapshotFormat(String),
    #[error("insufficient ledger history: need {needed} months, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("unknown account index {0}")]
    UnknownAccount(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
