//! Differentiable model, reverse-mode gradients and the AdamW optimiser.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod optim;
pub mod tensor;

pub use graph::{BatchStats, Gradients, Graph, Var};
pub use model::{Forward, Inference, Mode, Model, ModelConfig, RunningStats};
pub use optim::{adamw_step, AdamWConfig, AdamWState, Param};
pub use tensor::{Scalar, Tensor};
