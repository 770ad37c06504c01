//! Dense and sparse kernels, the student gradient with forward-mode tangent
//! propagation, and the loss primitives everything else is built from.
//!
//! All arithmetic is `f64` and every reduction has a fixed order, so the
//! same inputs always give bit-identical outputs.

mod dense;
mod dual;
mod gcn;
mod loss;
mod sparse;

pub use dense::{argmax, matmul, matmul_nt, matmul_tn, row_log_softmax, row_softmax, DenseMatrix};
pub use dual::Dual;
pub use gcn::{forward, grad_and_tangents, GcnForward, GcnInputs, GradTangents, LossSpec};
pub use loss::{cross_entropy, linear_softmax_grad, one_hot, LOG_CLAMP};
pub use sparse::{spmm, SparseAdjacency};

pub(crate) use dense::softmax_in_place;
