use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("table `{0}` already exists")]
    DuplicateTable(String),

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("index kind `{index}` cannot be applied to column `{column}` of kind {kind}")]
    IndexKindMismatch {
        index: &'static str,
        column: String,
        kind: &'static str,
    },

    #[error("schema violation on column `{column}`: {reason}")]
    SchemaViolation { column: String, reason: String },

    #[error("vector dimension mismatch on column `{column}`: expected {expected}, got {got}")]
    DimensionMismatch {
        column: String,
        expected: usize,
        got: usize,
    },

    #[error("column `{0}` has no secondary index")]
    UnindexedColumn(String),

    #[error("block checksum mismatch in segment {segment_id} at offset {offset}")]
    Corruption { segment_id: u64, offset: u64 },

    #[error("malformed segment file: {0}")]
    MalformedSegment(String),

    #[error("malformed write-ahead log: {0}")]
    MalformedWal(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("plan `{plan}` failed: {source}")]
    PlanExecution {
        plan: String,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown view or query id {0}")]
    UnknownViewOrQuery(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Json(String),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Json(err.to_string())
    }
}
