use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is not in front of the camera (z = {z})")]
    NonPositiveDepth { z: f64 },

    #[error("vector is not unit length (norm = {norm})")]
    NotUnit { norm: f64 },

    #[error("grid too small: {width}x{height}, need at least {min_width}x{min_height}")]
    GridTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },

    #[error("resolution mismatch: {expected:?} vs {found:?}")]
    ResolutionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("ray through pixel ({x}, {y}) misses every plane")]
    NoIntersection { x: usize, y: usize },

    #[error("evaluation mask selects no pixels")]
    EmptyMask,

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("malformed {kind} file {path}: {reason}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
