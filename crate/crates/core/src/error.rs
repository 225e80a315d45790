use std::path::PathBuf;

use thiserror::Error;

use crate::windows::Pattern;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: invalid field `{field}`: {reason}")]
    Parse {
        line: usize,
        field: &'static str,
        reason: String,
    },

    #[error("duplicate pub_id {0:?}")]
    DuplicatePubId(String),

    #[error("line {line}: publication {pub_id:?} has no authors")]
    EmptyAuthors { line: usize, pub_id: String },

    #[error("line {line}: publication {pub_id:?} lists author {author:?} twice")]
    DuplicateAuthor {
        line: usize,
        pub_id: String,
        author: String,
    },

    #[error("author {0:?} has no publications in the requested range")]
    AbsentAuthor(String),

    #[error("author {0:?} is not a node of the graph")]
    AbsentNode(String),

    #[error("pair query requires two distinct nodes, got {0:?} twice")]
    SameNode(String),

    #[error("invalid year range {start}..={end}")]
    InvalidRange { start: i32, end: i32 },

    #[error("span of {years} years is shorter than one window ({needed} years)")]
    SpanTooShort { years: i32, needed: i32 },

    #[error("class {0} is absent")]
    MissingClass(u8),

    #[error("class {class} has {count} samples, need at least {needed}")]
    ClassTooSmall { class: u8, count: usize, needed: usize },

    #[error("expected pattern {expected}, got {actual}")]
    WrongPattern { expected: Pattern, actual: Pattern },

    #[error("topic model: {0}")]
    Topics(String),

    #[error("no discipline vector for author {0:?}")]
    MissingDiscipline(String),

    #[error("zero-norm discipline vector")]
    ZeroNorm,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("expected {expected} features, got {actual}")]
    Arity { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("ensemble uses {used} features, oracle limit is {limit}")]
    TooManyFeatures { used: usize, limit: usize },

    #[error("feature names differ: {0}")]
    FeatureMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
