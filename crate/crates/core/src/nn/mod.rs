//! A small from-scratch CNN stack: tensors, layers with hand-written
//! backward passes, the classification network, SGD and the training loop.
//!
//! Training runs in `f32`; every layer is generic over [`Real`] so the
//! gradient checks can run the same code in `f64`.

pub mod checkpoint;
pub mod layers;
pub mod network;
pub mod optim;
mod scalar;
pub mod tensor;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use network::{LayerSpec, Mode, Network, NetworkSpec, Param};
pub use optim::Sgd;
pub use scalar::Real;
pub use tensor::Tensor;
pub use train::{train, EpochRecord, Example, ExampleSource, TrainConfig, TrainOutcome};
