use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Where a node's label currently comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelStatus {
    /// Given in the (possibly noisy) training data.
    Original,
    /// Removed as suspected noise; keeps the old label for auditing only.
    Filtered,
    /// Added by pseudo-labeling in some round.
    Pseudo,
    Unlabelled,
}

impl LabelStatus {
    pub fn supervises(self) -> bool {
        matches!(self, LabelStatus::Original | LabelStatus::Pseudo)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelStatus::Original => "original",
            LabelStatus::Filtered => "filtered",
            LabelStatus::Pseudo => "pseudo",
            LabelStatus::Unlabelled => "unlabelled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeLabel {
    pub label: Option<usize>,
    pub status: LabelStatus,
    /// Round in which a pseudo label was assigned.
    pub round: Option<usize>,
}

impl NodeLabel {
    const UNLABELLED: NodeLabel = NodeLabel {
        label: None,
        status: LabelStatus::Unlabelled,
        round: None,
    };
}

/// Per-node label bookkeeping used for training.
///
/// Only nodes with status [`LabelStatus::Original`] or
/// [`LabelStatus::Pseudo`] supervise anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelState {
    classes: usize,
    nodes: Vec<NodeLabel>,
}

impl LabelState {
    pub fn unlabelled(n: usize, classes: usize) -> Self {
        Self {
            classes,
            nodes: vec![NodeLabel::UNLABELLED; n],
        }
    }

    /// Every node labelled with status `original`.
    pub fn from_labels(labels: &[usize], classes: usize) -> Result<Self> {
        let mut s = Self::unlabelled(labels.len(), classes);
        for (i, &y) in labels.iter().enumerate() {
            s.set_original(i, y)?;
        }
        Ok(s)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> NodeLabel {
        self.nodes[i]
    }

    pub fn status(&self, i: usize) -> LabelStatus {
        self.nodes[i].status
    }

    /// The label a node supervises with, if any.
    pub fn label(&self, i: usize) -> Option<usize> {
        let n = self.nodes[i];
        if n.status.supervises() {
            n.label
        } else {
            None
        }
    }

    fn check_class(&self, y: usize) -> Result<()> {
        if y >= self.classes {
            return Err(Error::Validation(format!(
                "class {y} outside [0, {})",
                self.classes
            )));
        }
        Ok(())
    }

    pub fn set_original(&mut self, i: usize, y: usize) -> Result<()> {
        self.check_class(y)?;
        self.nodes[i] = NodeLabel {
            label: Some(y),
            status: LabelStatus::Original,
            round: None,
        };
        Ok(())
    }

    pub fn set_pseudo(&mut self, i: usize, y: usize, round: usize) -> Result<()> {
        self.check_class(y)?;
        self.nodes[i] = NodeLabel {
            label: Some(y),
            status: LabelStatus::Pseudo,
            round: Some(round),
        };
        Ok(())
    }

    /// Marks a node as filtered; it keeps its label value for auditing.
    pub fn set_filtered(&mut self, i: usize) {
        self.nodes[i].status = LabelStatus::Filtered;
    }

    pub fn clear(&mut self, i: usize) {
        self.nodes[i] = NodeLabel::UNLABELLED;
    }

    /// `(node, label)` for every supervising node, in node order.
    pub fn supervising(&self) -> Vec<(usize, usize)> {
        (0..self.nodes.len())
            .filter_map(|i| self.label(i).map(|y| (i, y)))
            .collect()
    }

    pub fn supervising_nodes(&self) -> Vec<usize> {
        self.supervising().into_iter().map(|(i, _)| i).collect()
    }

    /// Nodes that carry no supervision (`unlabelled` or `filtered`).
    pub fn unsupervised_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| !self.nodes[i].status.supervises())
            .collect()
    }

    pub fn count(&self, status: LabelStatus) -> usize {
        self.nodes.iter().filter(|n| n.status == status).count()
    }

    /// One-hot rows for supervising nodes; all-zero rows elsewhere.
    pub fn one_hot(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.nodes.len(), self.classes);
        for (i, y) in self.supervising() {
            m[(i, y)] = 1.0;
        }
        m
    }
}

/// Clean labels, held apart from [`LabelState`] so training code cannot
/// read them. Only evaluation and auditing take a `GroundTruth`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    classes: usize,
    labels: Vec<Option<usize>>,
}

impl GroundTruth {
    /// Snapshot of the labels currently supervising in `state`.
    pub fn capture(state: &LabelState) -> Self {
        Self {
            classes: state.classes(),
            labels: (0..state.len()).map(|i| state.label(i)).collect(),
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels[i]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Fraction of `nodes` whose prediction equals the true label. Nodes
    /// without a true label are skipped.
    pub fn accuracy(&self, predictions: &[usize], nodes: &[usize]) -> f64 {
        let mut hits = 0usize;
        let mut total = 0usize;
        for &i in nodes {
            if let Some(y) = self.labels[i] {
                total += 1;
                if predictions[i] == y {
                    hits += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }
}
