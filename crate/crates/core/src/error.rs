use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the volumetric engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("payload holds {actual} bytes but the header requires {expected}")]
    PayloadSize { expected: usize, actual: usize },

    #[error("voxel size must be positive and finite, got {0:?}")]
    VoxelSize([f64; 3]),

    #[error("dimensions must all be at least 1, got {0:?}")]
    EmptyDims([usize; 3]),

    #[error("image decode error: {0}")]
    Image(String),

    #[error("grids are not congruent: {0}")]
    Congruence(String),

    #[error("coordinate {coord:?} lies outside dims {dims:?}")]
    OutOfBounds { coord: [i64; 3], dims: [usize; 3] },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("label {0} does not exist")]
    MissingLabel(u32),

    #[error("{0}")]
    Degenerate(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}
