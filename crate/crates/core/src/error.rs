use std::path::PathBuf;

use thiserror::Error;

use crate::features::BackboneId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{backbone} extraction failed: expected shape {expected:?}, got {actual:?}")]
    Shape {
        backbone: BackboneId,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("{backbone} vector has length {actual}, expected {expected}")]
    Fusion {
        backbone: BackboneId,
        expected: usize,
        actual: usize,
    },

    #[error("backbone runtime error ({backbone}): {reason}")]
    Runtime { backbone: BackboneId, reason: String },

    #[error("while processing {path}: {source}")]
    Sample {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }
}
