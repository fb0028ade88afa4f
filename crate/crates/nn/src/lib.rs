//! Minimal deterministic neural-network engine for 1-D signal classifiers.
//!
//! Layer-wise reverse-mode differentiation over `[batch, channels, length]`
//! tensors, the layer set needed for residual CNN classifiers, mean
//! cross-entropy, momentum SGD, finite-difference gradient checks and a
//! versioned checkpoint format.

pub mod checkpoint;
mod error;
mod float;
pub mod gradcheck;
pub mod layers;
mod loss;
mod network;
mod optim;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use error::{CheckpointError, NnError, Result};
pub use float::{Float, FloatWidth};
pub use layers::{Layer, LayerSpec};
pub use loss::{argmax, cross_entropy, softmax, LossOutput};
pub use network::{Mode, Network, Weights};
pub use optim::Sgd;
pub use tensor::Tensor;
