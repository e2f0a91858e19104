//! From-scratch dense neural-network engine, VAE feature extractor, and
//! dataset pipeline shared by the federated-learning protocols and the
//! experiment runner.
//!
//! All numerics are `f64`. With the default `parallel` feature the batch
//! kernels fan out over rayon; disabling it falls back to the identical
//! sequential code paths, and results are bit-for-bit the same either way.

pub mod activation;
pub mod data;
pub mod error;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod optim;
pub mod rng;
pub mod train;
pub mod vae;

pub use activation::{softmax_rows, ActivationKind};
pub use error::{CoreError, Result};
pub use matrix::Matrix2D;
pub use model::{DenseLayer, ForwardCache, Gradients, MlpModel};
pub use optim::{adam_step, AdamState, TrainConfig};
pub use vae::{LatentMode, VaeModel, VaeSizing};
