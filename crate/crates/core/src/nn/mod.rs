//! Small dense autodiff toolkit for the neural policy.

mod graph;
mod params;
mod tensor;

pub use graph::{sigmoid, Grads, Graph, Var};
pub use params::{Adam, ParamId, ParamStore};
pub use tensor::Tensor;
