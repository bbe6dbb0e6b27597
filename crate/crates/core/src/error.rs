use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("stratum {stratum} has {size} note(s); at least {needed} required")]
    StratumTooSmall { stratum: String, size: usize, needed: usize },

    #[error("unknown question id `{0}`")]
    UnknownQuestion(String),

    #[error("no result for question `{0}`")]
    MissingQuestion(String),

    #[error("unknown note id `{0}`")]
    UnknownNote(String),

    #[error("unknown class label `{0}`")]
    UnknownLabel(String),

    #[error("tokenizer version mismatch: expected `{expected}`, found `{found}`")]
    TokenizerMismatch { expected: String, found: String },

    #[error("catalog mismatch: expected digest {expected}, found {found}")]
    CatalogMismatch { expected: String, found: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid span [{start}, {end})")]
    InvalidSpan { start: usize, end: usize },

    #[error("training labels contain a single class `{0}`")]
    SingleClass(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("template slot for question `{question}` does not align with token boundaries")]
    SlotAlignment { question: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the failure came from the filesystem rather than from the
    /// content of the inputs.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            Error::Json(e) => e.is_io(),
            _ => false,
        }
    }
}
