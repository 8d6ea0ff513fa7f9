//! A small CPU tensor engine with hand-written backward passes, plus the
//! U-net and Tiramisu segmentation networks built on it.

pub mod arch;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod ops;
pub mod optim;
pub mod tensor;
pub mod train;
pub mod weights;

pub use arch::{build, ArchSpec, Family, SegNet};
pub use error::{NnError, Result};
pub use network::{LayerKind, Network, NetworkBuilder, NodeId, Param};
pub use optim::OptimizerKind;
pub use tensor::{Real, Tensor};
pub use train::{train, Dataset, History, TrainConfig};
pub use weights::{load_weights, save_weights};
