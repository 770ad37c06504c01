//! Clean node selection for the upper-level loss: teacher-consensus
//! unlabelled nodes vetted by embedding compactness, plus low-loss
//! labelled nodes. All ties break by lowest node id.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::LabelState;
use crate::linalg::{argmax, LOG_CLAMP};
use crate::teachers::TeacherEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CleanSource {
    UnlabelledConsensus,
    LabelledLowloss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanNode {
    pub node: usize,
    pub label: usize,
    pub source: CleanSource,
}

/// Clean nodes with their pseudo-labels, sorted by node id, no duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleanNodeSet {
    nodes: Vec<CleanNode>,
}

impl CleanNodeSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds from `(node, label)` pairs; later duplicates are dropped.
    pub fn from_pairs(pairs: &[(usize, usize)], source: CleanSource) -> Self {
        build_clean_set(
            &pairs
                .iter()
                .map(|&(node, label)| CleanNode {
                    node,
                    label,
                    source,
                })
                .collect::<Vec<_>>(),
            &[],
        )
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[CleanNode] {
        &self.nodes
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.nodes.iter().map(|n| (n.node, n.label)).collect()
    }

    pub fn count(&self, source: CleanSource) -> usize {
        self.nodes.iter().filter(|n| n.source == source).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CleanParams {
    /// Same-class neighbours per teacher in the compactness score.
    pub beta1: usize,
    /// Consensus nodes kept per class.
    pub beta2: usize,
    /// Percentage of labelled nodes kept per class.
    pub alpha_percent: f64,
}

impl Default for CleanParams {
    fn default() -> Self {
        Self {
            beta1: 5,
            beta2: 20,
            alpha_percent: 50.0,
        }
    }
}

impl CleanParams {
    pub fn validate(&self) -> Result<()> {
        if self.beta1 < 1 {
            return Err(Error::Validation("beta1 must be >= 1".into()));
        }
        if !(0.0..=100.0).contains(&self.alpha_percent) {
            return Err(Error::Validation(format!(
                "alpha_percent {} outside [0, 100]",
                self.alpha_percent
            )));
        }
        Ok(())
    }
}

/// `(candidate, consensus class)` for every node of `unlabelled` on which
/// all teachers' argmax agree.
pub fn consensus_candidates(ens: &TeacherEnsemble, unlabelled: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &i in unlabelled {
        let first = argmax(ens.probs()[0].row(i));
        if ens.probs()[1..].iter().all(|p| argmax(p.row(i)) == first) {
            out.push((i, first));
        }
    }
    out.sort_unstable();
    out
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn by_value_then_id(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Compactness score per candidate: for each teacher, the summed Euclidean
/// distance to the `beta1` nearest other candidates with the same
/// consensus class, summed over teachers. Returned in candidate order.
pub fn embedding_score(
    ens: &TeacherEnsemble,
    candidates: &[(usize, usize)],
    beta1: usize,
) -> Vec<f64> {
    let mut scores = vec![0.0; candidates.len()];
    for h in ens.embeddings() {
        for (a, &(i, yi)) in candidates.iter().enumerate() {
            let mut dists: Vec<(f64, usize)> = candidates
                .iter()
                .filter(|&&(u, yu)| u != i && yu == yi)
                .map(|&(u, _)| (euclidean(h.row(i), h.row(u)), u))
                .collect();
            dists.sort_by(by_value_then_id);
            scores[a] += dists.iter().take(beta1).map(|&(d, _)| d).sum::<f64>();
        }
    }
    scores
}

/// Per consensus class, the `beta2` candidates with the smallest score.
pub fn select_clean_unlabelled(
    candidates: &[(usize, usize)],
    scores: &[f64],
    beta2: usize,
) -> Vec<CleanNode> {
    let mut per_class: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
    for (&(i, y), &s) in candidates.iter().zip(scores) {
        per_class.entry(y).or_default().push((s, i));
    }
    let mut out = Vec::new();
    for (y, mut nodes) in per_class {
        nodes.sort_by(by_value_then_id);
        out.extend(nodes.into_iter().take(beta2).map(|(_, node)| CleanNode {
            node,
            label: y,
            source: CleanSource::UnlabelledConsensus,
        }));
    }
    out.sort_by_key(|n| n.node);
    out
}

/// Summed teacher cross-entropy of a node's label.
pub fn teacher_loss(ens: &TeacherEnsemble, node: usize, label: usize) -> f64 {
    ens.probs()
        .iter()
        .map(|p| -p[(node, label)].max(LOG_CLAMP).ln())
        .sum()
}

/// `ceil(alpha% * size)`, robust to the float error in `alpha * size / 100`.
pub(crate) fn percent_count(alpha_percent: f64, size: usize) -> usize {
    let x = alpha_percent * size as f64 / 100.0;
    ((x - 1e-9).ceil().max(0.0) as usize).min(size)
}

/// Per label class, the `ceil(alpha% * class size)` supervising nodes of
/// `nodes` with the lowest summed teacher loss. Labels are kept as-is.
pub fn select_clean_labelled(
    ens: &TeacherEnsemble,
    labels: &LabelState,
    nodes: &[usize],
    alpha_percent: f64,
) -> Vec<CleanNode> {
    let mut per_class: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
    for &i in nodes {
        if let Some(y) = labels.label(i) {
            per_class
                .entry(y)
                .or_default()
                .push((teacher_loss(ens, i, y), i));
        }
    }
    let mut out = Vec::new();
    for (y, mut members) in per_class {
        let keep = percent_count(alpha_percent, members.len());
        members.sort_by(by_value_then_id);
        out.extend(members.into_iter().take(keep).map(|(_, node)| CleanNode {
            node,
            label: y,
            source: CleanSource::LabelledLowloss,
        }));
    }
    out.sort_by_key(|n| n.node);
    out
}

/// Union of both parts. A node present in both keeps its labelled entry.
pub fn build_clean_set(unlabelled: &[CleanNode], labelled: &[CleanNode]) -> CleanNodeSet {
    let mut map: BTreeMap<usize, CleanNode> = BTreeMap::new();
    for n in unlabelled {
        map.entry(n.node).or_insert(*n);
    }
    for n in labelled {
        map.insert(n.node, *n);
    }
    CleanNodeSet {
        nodes: map.into_values().collect(),
    }
}

/// The full clean-set pipeline for one outer round.
pub fn select_clean(
    ens: &TeacherEnsemble,
    labels: &LabelState,
    params: &CleanParams,
) -> CleanNodeSet {
    let candidates = consensus_candidates(ens, &labels.unsupervised_nodes());
    let scores = embedding_score(ens, &candidates, params.beta1);
    let unlabelled = select_clean_unlabelled(&candidates, &scores, params.beta2);
    let labelled = select_clean_labelled(
        ens,
        labels,
        &labels.supervising_nodes(),
        params.alpha_percent,
    );
    build_clean_set(&unlabelled, &labelled)
}
