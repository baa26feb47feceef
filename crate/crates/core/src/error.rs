use thiserror::Error;

/// Errors reported by dataset ingestion, objective evaluation and selection.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed csv row at line {line}: {msg}")]
    MalformedRow { line: u64, msg: String },

    #[error("non-positive or non-finite runtime {value} at line {line}")]
    BadRuntime { line: u64, value: f64 },

    #[error("inconsistent parameter arity at line {line}: expected {expected}, found {found}")]
    InconsistentArity {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("device {name:?} appears with conflicting metadata")]
    ConflictingDevice { name: String },

    #[error("unparseable json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no devices survive pruning of the tuning database")]
    NoDevices,

    #[error("invalid generator spec: {0}")]
    InvalidGenerator(String),

    #[error("invalid job: {0}")]
    InvalidJob(String),

    #[error("empty environment scope")]
    EmptyScope,

    #[error("empty candidate set")]
    EmptyCandidateSet,

    #[error("variant index {index} out of range for {variants} variants")]
    VariantOutOfRange { index: usize, variants: usize },

    #[error("fleet spec has no quantity for {what}")]
    FleetQuantityMissing { what: String },

    #[error("{combinations} combinations exceed the enumeration cap of {cap}")]
    EnumerationCap { combinations: u128, cap: u64 },

    #[error("no variant mapping for environment {env}")]
    NoMapping { env: String },

    #[error("selection result does not match the dataset: {0}")]
    ResultMismatch(String),

    #[error("holdout plan invalid: {0}")]
    InvalidPlan(String),

    #[error("environment {env} has no valid variant measurement")]
    UnmeasuredEnvironment { env: String },
}

pub type Result<T> = std::result::Result<T, Error>;
