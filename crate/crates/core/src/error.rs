use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse {path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh is not closed ({open_edges} boundary or non-manifold edges); refraction needs a watertight surface")]
    OpenMesh { open_edges: usize },
    #[error("point behind or on the camera plane (z = {z})")]
    NonPositiveDepth { z: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("resolution mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    ResolutionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unsupported format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn mismatch(left: (usize, usize), right: (usize, usize)) -> Self {
        Error::ResolutionMismatch {
            left_w: left.0,
            left_h: left.1,
            right_w: right.0,
            right_h: right.1,
        }
    }
}
