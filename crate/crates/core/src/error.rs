use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed npy file: {0}")]
    Npy(String),

    #[error("malformed csv at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("row-count mismatch: {expected} vs {found} ({id})")]
    RowCountMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("dataset mismatch: {expected} vs {found} ({id})")]
    DatasetMismatch {
        id: String,
        expected: String,
        found: String,
    },

    #[error("duplicate embedder: {0}")]
    DuplicateEmbedder(String),

    #[error("unknown embedder: {0}")]
    UnknownEmbedder(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("not enough rows: need at least {needed}, found {found}")]
    TooFewRows { needed: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("undefined statistic: {0}")]
    Undefined(&'static str),

    #[error("solver: {0}")]
    Solver(String),

    #[error("no shared embedders: {0}")]
    NoOverlap(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad inputs or configuration rather than by a
    /// failure while computing.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Solver(_) | Error::Undefined(_) | Error::NoOverlap(_))
    }
}
