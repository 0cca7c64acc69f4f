//! Dense `f64` tensors, a reverse-mode differentiation graph and a
//! finite-difference gradient oracle.

mod fd;
mod graph;
mod tensor;

pub use fd::{finite_difference_grad, max_relative_error, relative_error};
pub use graph::{Gradients, Graph, NodeId};
pub use tensor::Tensor;
