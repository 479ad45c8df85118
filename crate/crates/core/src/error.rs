use std::path::PathBuf;

use thiserror::Error;

use crate::poisson::SolveStats;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid position ({0}, {1})")]
    InvalidPosition(f64, f64),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("grid mismatch: expected {expected}, found {found}")]
    GridMismatch { expected: String, found: String },

    #[error("kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("bad {field}: {detail}")]
    Parse { field: &'static str, detail: String },

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("projection solver did not converge ({} iterations, residual {:.3e})", .0.iterations, .0.final_residual)]
    ProjectionFailed(SolveStats),

    #[error("degenerate strokes: {0}")]
    DegenerateStrokes(String),

    #[error("external generator failed: {0}")]
    External(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn parse(field: &'static str, detail: impl Into<String>) -> Self {
        Error::Parse {
            field,
            detail: detail.into(),
        }
    }
}
