//! Error taxonomy shared across the workspace.
//!
//! The split matters downstream: the CLI maps `Config`/`Shape`/`State` to
//! exit code 2, data-layer failures to 3, and `Numeric` to 4.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed inconsistent or out-of-range settings.
    #[error("config: {0}")]
    Config(String),

    /// Tensor or parameter dimensions disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Operation called out of order (e.g. backward before forward).
    #[error("state: {0}")]
    State(String),

    /// Input table does not match the declared schema.
    #[error("schema: {0}")]
    Schema(String),

    /// A cell failed to parse; row/col are 1-based as a user would count them.
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    /// Snapshot or dataset file is damaged or truncated.
    #[error("integrity: {0}")]
    Integrity(String),

    /// Snapshot written by an incompatible format revision.
    #[error("snapshot format v{found} not supported (this build reads v{expected})")]
    Version { found: u32, expected: u32 },

    /// Requested operation is not defined for the given inputs.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Training or a numeric routine produced non-finite values.
    #[error("numeric: {0}")]
    Numeric(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Shape(_) | Error::State(_) => 2,
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Integrity(_)
            | Error::Version { .. }
            | Error::Unsupported(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}
