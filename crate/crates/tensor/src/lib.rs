//! Dense `f64` tensors and a tape-based reverse-mode autodiff [`Graph`].
//!
//! A graph is built fresh for every forward pass. Leaves enter through
//! [`Graph::param`] (tracked) or [`Graph::constant`] (not tracked); every op
//! appends a node whose backward closure maps the output gradient to input
//! gradients. [`Graph::backward`] walks the tape once in reverse.
//!
//! Ops assert shape agreement and panic on misuse, the way slicing does;
//! callers that take shapes from users validate them first.

mod gemm;
pub mod gradcheck;
mod graph;
pub mod init;
mod ops;
mod tensor;

pub use graph::{BackwardArgs, Gradients, Graph, Var};
pub use ops::conv::Conv2dSpec;
pub use ops::loss::ctc_feasible;
pub use ops::roi::RoiBox;
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("zero-norm row {0} cannot be normalized")]
    ZeroNorm(usize),
}
