use std::path::PathBuf;

use crate::ItemId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column {column:?}: cannot parse {value:?} as a finite number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCount {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: invalid id {value:?} ({reason})")]
    InvalidId {
        row: usize,
        value: String,
        reason: &'static str,
    },

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("dataset has no feature columns")]
    NoFeatures,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative prior mass {mass} at item {item}")]
    NegativeMass { item: ItemId, mass: f64 },

    #[error("prior has no positive mass")]
    EmptySupport,

    #[error("size mismatch: {0}")]
    Mismatch(String),

    #[error("answer history is inconsistent with every hypothesis")]
    InconsistentAnswers,

    #[error("session already finished")]
    SessionFinished,

    #[error("malformed answer {0}; expected +1 or -1")]
    MalformedAnswer(i64),

    #[error("rank net construction did not converge: {0}")]
    NetConstruction(String),

    #[error("instance too large: n = {n} exceeds {max}")]
    TooLarge { n: usize, max: usize },

    #[error("unknown {kind} {name:?}")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
