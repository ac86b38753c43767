use std::path::PathBuf;

use crate::value::Kind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("unknown attribute `{table}.{attribute}`")]
    UnknownAttribute { table: String, attribute: String },

    #[error("kind mismatch: {context} expects {expected}, got {found}")]
    KindMismatch {
        context: String,
        expected: Kind,
        found: Kind,
    },

    #[error("{table}: row {row}: {message}")]
    Ingest {
        table: String,
        /// 1-based data row number (header excluded).
        row: usize,
        message: String,
    },

    #[error("csv header mismatch for `{table}`: {message}")]
    HeaderMismatch { table: String, message: String },

    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("degree of personalization must be within [0, 1], got {0}")]
    DegreeOutOfRange(f64),

    #[error("arithmetic overflow while aggregating `{0}`")]
    Overflow(String),

    #[error("view for `{owner}` was built at generation {built} but the warehouse is at {current}")]
    StaleView {
        owner: String,
        built: u64,
        current: u64,
    },

    #[error("no materialized view is bound for `{0}`")]
    NoViewBound(String),

    #[error("view built for profile {found} cannot serve profile {expected}")]
    ViewMismatch { expected: String, found: String },

    #[error("group profile needs at least one member")]
    EmptyGroup,

    #[error("user `{0}` already exists")]
    DuplicateUser(String),

    #[error("invalid user id `{0}`")]
    InvalidUserId(String),

    #[error("passphrase must not be empty")]
    EmptyPassphrase,

    #[error("unknown user or bad credential")]
    Unauthenticated,

    #[error("not found: {0}")]
    NotFound(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn unknown_attribute(table: &str, attribute: &str) -> Self {
        Error::UnknownAttribute {
            table: table.to_string(),
            attribute: attribute.to_string(),
        }
    }
}
