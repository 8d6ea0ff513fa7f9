//! Fiber segmentation for microCT volumes: I/O, tiling, the classic
//! image-processing pipeline, augmentation, metrics and tiled prediction.

pub mod augment;
pub mod classic;
pub mod dataset;
pub mod error;
pub mod labeling;
pub mod metrics;
pub mod phantom;
pub mod predictor;
pub mod tiler;
pub mod volume;

pub use error::{Result, SegError};
pub use fiberseg_nn as nn;
