use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("dimensionality mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("backend error: {0}")]
    Backend(String),

    #[error("zero-shot classification needs at least 2 prompts, got {0}")]
    InsufficientClasses(usize),

    #[error("logit scale must be positive and finite, got {0}")]
    BadLogitScale(f64),

    #[error("prompt template must contain exactly one `{{}}` placeholder: {0:?}")]
    BadTemplate(String),

    #[error("cannot decode image: {0}")]
    Decode(String),

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("duplicate image id: {0}")]
    DuplicateId(String),

    #[error("corrupt store at byte offset {offset}: {message}")]
    CorruptStore { offset: u64, message: String },

    #[error("invalid store: {0}")]
    InvalidStore(String),

    #[error("lattice interval must be positive and no larger than the smallest bbox span, got {0}")]
    BadInterval(f64),

    #[error("invalid bounding box: {0}")]
    BadBBox(String),

    #[error("invalid grid: {0}")]
    BadGrid(String),

    #[error("no geo-tagged records inside the bounding box")]
    EmptyRegion,

    #[error("degenerate scores: {0}")]
    DegenerateScores(String),

    #[error("street imagery client: {0}")]
    Client(String),

    #[error("imagery quota exhausted after {saved} records; partial manifest at {}", manifest.display())]
    QuotaExceeded { saved: usize, manifest: PathBuf },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown image id: {0}")]
    UnknownImage(String),
}

impl Error {
    /// Stable machine-readable name, used in CLI error lines and HTTP error bodies.
    pub fn name(&self) -> &'static str {
        match self {
            Error::ZeroVector => "ZeroVector",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::Backend(_) => "BackendError",
            Error::InsufficientClasses(_) => "InsufficientClasses",
            Error::BadLogitScale(_) => "BadLogitScale",
            Error::BadTemplate(_) => "BadTemplate",
            Error::Decode(_) => "DecodeError",
            Error::Manifest { .. } => "ManifestError",
            Error::DuplicateId(_) => "DuplicateId",
            Error::CorruptStore { .. } => "CorruptStore",
            Error::InvalidStore(_) => "InvalidStore",
            Error::BadInterval(_) => "BadInterval",
            Error::BadBBox(_) => "BadBBox",
            Error::BadGrid(_) => "BadGrid",
            Error::EmptyRegion => "EmptyRegion",
            Error::DegenerateScores(_) => "DegenerateScores",
            Error::Client(_) => "ClientError",
            Error::QuotaExceeded { .. } => "QuotaExceeded",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Io { .. } => "IoError",
            Error::UnknownImage(_) => "UnknownImage",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
