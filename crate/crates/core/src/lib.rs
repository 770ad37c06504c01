//! Node classification under label noise by distilling a diverse teacher
//! ensemble into a graph-convolution student.
//!
//! The per-class teacher weights used to fuse soft labels are learned by
//! bi-level optimization: the student trains on the fused labels for a
//! short unrolled window, and the weights follow the forward-mode
//! hypergradient of the student's loss on a set of clean nodes. Between
//! rounds the label set is cleaned by per-class loss filtering and
//! confidence-ranked pseudo-labels.
//!
//! Modules, bottom up: [`linalg`] (dense/sparse kernels, GCN forward and
//! forward-over-reverse derivatives), [`graphdata`], [`noise`],
//! [`teachers`], [`student`], [`bilevel`], [`cleanselect`],
//! [`labelimprove`] and [`runner`].

pub mod bilevel;
pub mod cleanselect;
pub mod error;
pub mod graphdata;
pub mod labelimprove;
pub mod linalg;
pub mod noise;
pub mod optim;
pub mod rng;
pub mod runner;
pub mod student;
pub mod teachers;

pub use bilevel::{BilevelParams, SoftLabels, TangentBundle, TeacherWeightMatrix};
pub use cleanselect::{CleanNodeSet, CleanParams};
pub use error::{Error, Result};
pub use graphdata::{
    Graph, GroundTruth, LabelState, LabelStatus, SbmParams, SplitFractions, SplitMasks,
};
pub use labelimprove::ImproveParams;
pub use linalg::{DenseMatrix, Dual, SparseAdjacency};
pub use noise::{NoiseConfig, NoiseKind, NoiseSpec};
pub use runner::{Mode, RunConfig, RunReport};
pub use student::StudentParams;
pub use teachers::TeacherEnsemble;
