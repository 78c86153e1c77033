//! From-scratch convolutional network training and evaluation for binary
//! chest X-ray classification (Normal vs Pneumonia).
//!
//! The numeric core is generic over the element type ([`Scalar`]): training
//! and inference run at `f32`, while gradient checks run the same code paths
//! at `f64`. Concrete aliases for both are exported at the crate root.

pub mod checkpoint;
pub mod datapipe;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use layers::{LayerSpec, Mode, ModelSpec, Network};
pub use metrics::{ConfusionMatrix, EvaluationReport};
pub use optim::{AdamConfig, AdamState, PlateauConfig, PlateauState};
pub use rng::Prng;
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};
pub use trainer::{History, TrainConfig};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Network32 = Network<f32>;
pub type Network64 = Network<f64>;
pub type AdamState32 = AdamState<f32>;
