//! Learning the teacher weight matrix by bi-level optimization.
//!
//! The lower level trains the student on fused soft labels with plain
//! gradient descent; the upper level moves the teacher weights along the
//! hypergradient of a clean-node loss taken through the unrolled inner
//! steps. The Jacobian of the student parameters with respect to every
//! weight entry is accumulated forward, step by step, as
//! `Z_t = A_t Z_{t-1} + B_t` with `Z_0 = 0`; `A_t` is never materialized.

mod distill;
mod fusion;
mod reverse;
mod window;

pub use distill::{
    run_distillation, BilevelParams, DistillOptions, DistillOutcome, LowerRows, WindowRecord,
};
pub use fusion::{
    direction, fuse_soft_labels, fuse_soft_labels_dual, fusion_vjp, SoftLabels, TeacherWeightMatrix,
};
pub use reverse::reverse_hypergradient;
pub use window::{hypergradient, inner_step, upper_loss, upper_step, TangentBundle, UpperStep};
