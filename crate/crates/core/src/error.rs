use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),

    #[error("unsupported audio format in {path}: {property}")]
    UnsupportedFormat { path: PathBuf, property: String },

    #[error("wav error in {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("insufficient data for {what}: need at least {needed}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("no voiced frames")]
    NoVoicing,

    #[error("frame length {frame_len} exceeds signal length {len}")]
    FrameTooLong { frame_len: usize, len: usize },

    #[error("unknown emotion label `{0}`")]
    UnknownLabel(String),

    #[error("unknown gender `{0}`")]
    UnknownGender(String),

    #[error("missing context for {attribute}: {missing}")]
    MissingContext {
        attribute: &'static str,
        missing: &'static str,
    },

    #[error("invalid template `{template}`: {reason}")]
    InvalidTemplate { template: String, reason: String },

    #[error("empty caption pool")]
    EmptyPool,

    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: String,
        expected: String,
        got: String,
    },

    #[error("degenerate embedding (norm {0:e})")]
    DegenerateEmbedding(f64),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label `{0}` is not in the query set")]
    LabelNotInQuerySet(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
