use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid BIO sequence at index {index}: {reason}")]
    InvalidBio { index: usize, reason: &'static str },

    #[error("invalid span {start}..{end}: {reason}")]
    InvalidSpan {
        start: usize,
        end: usize,
        reason: &'static str,
    },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("empty query")]
    EmptyQuery,

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("dataset too small: {needed} items required, got {got}")]
    DatasetTooSmall { needed: usize, got: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("empty catalog")]
    EmptyCatalog,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gold labels cross a forbidden transition at index {index}")]
    MaskViolation { index: usize },

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown word {0:?}")]
    UnknownWord(String),

    #[error("not a model file")]
    NotAModel,

    #[error("model format version mismatch: file has version {found}, this reader supports {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
