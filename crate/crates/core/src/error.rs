use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the saliency toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate bandwidth: |ln(sigma_f / f0)| = {0:e} is below the 1e-6 guard")]
    DegenerateBandwidth(f64),

    #[error("normalization undefined: {0}")]
    UndefinedNormalization(&'static str),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("array file: {0}")]
    Npy(#[from] NpyError),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema: {0}")]
    Schema(String),

    #[error("layer {index}: {source}")]
    Layer {
        index: i64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Parse failures for NPY array files. Offsets are byte positions in the file.
#[derive(Debug, Error)]
pub enum NpyError {
    #[error("bad magic bytes at offset {offset}")]
    BadMagic { offset: usize },

    #[error("unsupported format version {major}.{minor} at offset {offset}")]
    UnsupportedVersion { major: u8, minor: u8, offset: usize },

    #[error("malformed header at offset {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },

    #[error("unsupported dtype {0:?} (expected \"<f4\" or \"<f8\")")]
    UnsupportedDtype(String),

    #[error("fortran-ordered arrays are not supported")]
    FortranOrder,

    #[error("unsupported shape {0:?} (expected 2 or 3 dimensions, all nonzero)")]
    UnsupportedShape(Vec<usize>),

    #[error("payload has {actual} bytes, shape requires {expected}")]
    PayloadMismatch { expected: usize, actual: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
