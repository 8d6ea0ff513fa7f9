use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SegError {
    #[error("no slices in {dir} match {pattern:?}")]
    NoSlicesFound { dir: PathBuf, pattern: String },
    #[error("slice {path} is {found}, expected {expected}")]
    InconsistentSliceShape { path: PathBuf, expected: String, found: String },
    #[error("slice indices are not contiguous: {0}")]
    NonContiguousSlices(String),
    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unsupported data type: {0}")]
    UnsupportedDtype(String),
    #[error("bad volume header {path}: {message}")]
    BadHeader { path: PathBuf, message: String },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("tile {0:?} missing from the tile set")]
    MissingTile(Vec<usize>),
    #[error("tile {0:?} appears more than once")]
    DuplicateTile(Vec<usize>),
    #[error("degenerate histogram: {0}")]
    DegenerateHistogram(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("gold standard contains a single class")]
    SingleClassGold,
    #[error("could not place fiber {placed} of {requested} without overlap")]
    PlacementFailure { placed: usize, requested: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Nn(#[from] fiberseg_nn::NnError),
    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SegError>;
