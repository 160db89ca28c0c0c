use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown polarity code {code:?} at line {line}")]
    UnknownPolarity { code: String, line: usize },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for vocabulary of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("sample {id}: empty sequence")]
    EmptySample { id: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate marginals")]
    DegenerateMarginals,

    #[error("AUROC undefined: labels contain a single class")]
    AurocUndefined,

    #[error("empty evaluation set")]
    EmptyEvaluation,

    #[error("label/head mismatch: {0}")]
    LabelMismatch(String),

    #[error("bad magic bytes: not a weight container")]
    BadMagic,

    #[error("unsupported weight container version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("trailing bytes after last tensor: {0} bytes")]
    TrailingBytes(usize),

    #[error("inconsistent weight container: {0}")]
    Inconsistent(String),

    #[error("vocabulary hash mismatch: weights {weights}, vocabulary {vocab}")]
    VocabMismatch { weights: String, vocab: String },

    #[error("architecture mismatch: {}", .0.join("; "))]
    ArchitectureMismatch(Vec<String>),

    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("missing input: {0}")]
    Missing(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
