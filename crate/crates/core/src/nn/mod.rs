//! Minimal dense neural-network toolkit: tensors, reverse-mode
//! differentiation, layers, Adam and a checkpoint codec.

mod checkpoint;
mod graph;
mod layers;
mod optim;
mod params;
mod tensor;

#[cfg(test)]
mod gradcheck;

pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use graph::{Gradients, Graph, Var};
pub use layers::{AttentionOutput, LayerNorm, Linear, LstmCell, Mlp, MultiHeadAttention, LAYER_NORM_EPS};
pub use optim::Adam;
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
