//! The classifier's building blocks, each with a forward and a backward pass.
//!
//! All spatial tensors are `[batch, channel, height, width]`, row-major.

mod activation;
mod conv;
mod dense;
mod dropout;
mod network;
mod pool;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar};
pub use conv::{Conv2d, ConvGrads, KERNEL};
pub use dense::{Dense, DenseGrads};
pub use dropout::{Dropout, DropoutMask, Mode};
pub use network::{Cache, LayerSpec, ModelSpec, Network, DEFAULT_IMAGE_SIZE};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, PoolIndices};
