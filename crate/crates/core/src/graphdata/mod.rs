//! Graphs, label bookkeeping, dataset files, splits, and synthetic
//! stochastic-block-model data.

mod graph;
mod io;
mod labels;
mod sbm;
mod splits;

pub use graph::{normalize_adjacency, Graph};
pub use io::{load_graph, save_graph, write_matrix_csv, GraphFiles};
pub use labels::{GroundTruth, LabelState, LabelStatus, NodeLabel};
pub use sbm::{generate_sbm, SbmParams};
pub use splits::{make_splits, SplitFractions, SplitMasks};
