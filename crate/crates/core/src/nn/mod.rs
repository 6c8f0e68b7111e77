//! Minimal tape-based neural network toolkit: tensors, reverse-mode
//! differentiation, layers, and the Adam optimizer.

pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod param;
pub mod tensor;

pub use graph::{sigmoid, Gradients, Graph, Var};
pub use layers::{Conv1d, Embedding, LayerNorm, Linear, LstmCell, LstmState};
pub use optim::Adam;
pub use param::{Module, Param};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
