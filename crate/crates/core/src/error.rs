use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} overflow at index {index}: {count} exceeds the configured maximum {max}")]
    DescriptorOverflow {
        what: &'static str,
        index: usize,
        count: usize,
        max: usize,
    },

    #[error("instance {0} does not appear in the segmentation map")]
    MissingInstance(u32),

    #[error("negative edge weight {weight} between nodes {from} and {to}")]
    NegativeWeight { from: usize, to: usize, weight: f64 },

    #[error("class tables differ between the two models")]
    ClassTableMismatch,

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt or malformed data: {0}")]
    Corrupt(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("image error: {0}")]
    Image(String),

    #[error("sample {id}: {source}")]
    Sample {
        id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::Corrupt(msg.into())
    }
}
