use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, left is {left:?} and right is {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("batchnorm in train mode needs at least 2 rows, got {rows}")]
    BatchTooSmall { rows: usize },

    #[error("row {row} has norm {norm:e}, below the normalization floor")]
    DegenerateEmbedding { row: usize, norm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label {label} is out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid retrieval task: {0}")]
    Task(String),

    #[error("query identity {identity} has no positive in the gallery")]
    MissingPositive { identity: u32 },

    #[error("query and gallery sets are not paired: {0}")]
    Pairing(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    Magic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (this build reads version {expected}); the file must be upgraded")]
    Version { expected: u32, found: u32 },

    #[error("payload length mismatch: {0}")]
    PayloadLength(String),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("checkpoint blob {name:?}: expected shape {expected:?}, found {found:?}")]
    BlobShape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("checkpoint is missing blob {0:?}")]
    MissingBlob(String),

    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape { op, left, right }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
