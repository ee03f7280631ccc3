//! Dense reverse-mode automatic differentiation and the Adam optimizer.

mod adam;
mod check;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamError, AdamState};
pub use check::finite_difference_check;
pub use graph::{ColumnMix, Graph, GraphError, NodeId};
pub use tensor::{tanh, Tensor2};
