//! Label improvement between training rounds: per-class removal of the
//! highest-loss labels and pseudo-labels from student and teacher
//! confidence.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::LabelState;
use crate::linalg::{argmax, DenseMatrix, LOG_CLAMP};
use crate::teachers::TeacherEnsemble;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImproveParams {
    /// Fraction of each class's labels removed per round, in `[0, 1)`.
    pub r: f64,
    /// Pseudo-labels per predicted class per source.
    pub rho: usize,
}

impl Default for ImproveParams {
    fn default() -> Self {
        Self { r: 0.2, rho: 20 }
    }
}

impl ImproveParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.r) {
            return Err(Error::Validation(format!("r = {} outside [0, 1)", self.r)));
        }
        Ok(())
    }
}

/// A pseudo-label proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub node: usize,
    pub label: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PseudoSource {
    Student,
    Teacher,
    Both,
}

impl PseudoSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PseudoSource::Student => "student",
            PseudoSource::Teacher => "teacher",
            PseudoSource::Both => "both",
        }
    }
}

/// A pseudo-label that was actually assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoAssignment {
    pub node: usize,
    pub label: usize,
    pub source: PseudoSource,
}

/// How many labels of a class with `size` members to remove.
pub fn removal_count(size: usize, r: f64) -> usize {
    if size == 0 {
        return 0;
    }
    let want = (r * size as f64 - 1e-9).ceil().max(0.0) as usize;
    want.min(size - 1)
}

/// Per class of the supervising nodes in `nodes`, marks the
/// `removal_count` highest-loss ones as filtered. Returns the new state
/// and the removed `(node, label)` pairs in node order.
pub fn filter_noisy(
    student_probs: &DenseMatrix,
    labels: &LabelState,
    nodes: &[usize],
    r: f64,
) -> Result<(LabelState, Vec<(usize, usize)>)> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Argument(format!("r = {r} outside [0, 1)")));
    }
    let mut per_class: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
    for &i in nodes {
        if let Some(y) = labels.label(i) {
            let loss = -student_probs[(i, y)].max(LOG_CLAMP).ln();
            per_class.entry(y).or_default().push((loss, i));
        }
    }
    let mut out = labels.clone();
    let mut removed = Vec::new();
    for (y, mut members) in per_class {
        let count = removal_count(members.len(), r);
        members.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &members[..count] {
            out.set_filtered(i);
            removed.push((i, y));
        }
    }
    removed.sort_unstable();
    Ok((out, removed))
}

/// Per argmax class of `scores`, the `rho` most confident of `nodes`
/// (confidence = row maximum, ties by lowest id).
pub fn top_per_class(scores: &DenseMatrix, nodes: &[usize], rho: usize) -> Vec<Candidate> {
    let mut per_class: BTreeMap<usize, Vec<Candidate>> = BTreeMap::new();
    for &i in nodes {
        let row = scores.row(i);
        let label = argmax(row);
        per_class.entry(label).or_default().push(Candidate {
            node: i,
            label,
            confidence: row[label],
        });
    }
    let mut out = Vec::new();
    for (_, mut members) in per_class {
        members.sort_by(|a, b| {
            b.confidence
                .partial_cmp(&a.confidence)
                .unwrap_or(Ordering::Equal)
                .then(a.node.cmp(&b.node))
        });
        out.extend(members.into_iter().take(rho));
    }
    out.sort_by_key(|c| c.node);
    out
}

/// Student-confidence candidates among unlabelled and filtered nodes.
pub fn pseudo_select_student(
    student_probs: &DenseMatrix,
    labels: &LabelState,
    rho: usize,
) -> Vec<Candidate> {
    top_per_class(student_probs, &labels.unsupervised_nodes(), rho)
}

/// Candidates ranked by the unnormalized sum of teacher probabilities.
pub fn pseudo_select_teacher(
    ens: &TeacherEnsemble,
    labels: &LabelState,
    rho: usize,
) -> Vec<Candidate> {
    top_per_class(&ens.summed(), &labels.unsupervised_nodes(), rho)
}

/// Assigns the union of both candidate lists as pseudo-labels for `round`.
/// A node proposed by both sources is added once if they agree and
/// skipped if they do not.
pub fn apply_pseudo(
    labels: &LabelState,
    student: &[Candidate],
    teacher: &[Candidate],
    round: usize,
) -> Result<(LabelState, Vec<PseudoAssignment>)> {
    let mut merged: BTreeMap<usize, Option<PseudoAssignment>> = BTreeMap::new();
    let sources = [
        (student, PseudoSource::Student),
        (teacher, PseudoSource::Teacher),
    ];
    for (list, source) in sources {
        for cand in list {
            if labels.status(cand.node).supervises() {
                return Err(Error::Argument(format!(
                    "pseudo candidate {} already supervises",
                    cand.node
                )));
            }
            merged
                .entry(cand.node)
                .and_modify(|slot| {
                    *slot = match *slot {
                        Some(prev) if prev.label == cand.label && prev.source != source => {
                            Some(PseudoAssignment {
                                source: PseudoSource::Both,
                                ..prev
                            })
                        }
                        Some(prev) if prev.label == cand.label => Some(prev),
                        _ => None,
                    }
                })
                .or_insert(Some(PseudoAssignment {
                    node: cand.node,
                    label: cand.label,
                    source,
                }));
        }
    }
    let mut out = labels.clone();
    let mut added = Vec::new();
    for a in merged.into_values().flatten() {
        out.set_pseudo(a.node, a.label, round)?;
        added.push(a);
    }
    Ok((out, added))
}

/// What one round of label improvement changed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundAudit {
    pub round: usize,
    pub removed: Vec<(usize, usize)>,
    pub added: Vec<PseudoAssignment>,
}

/// Filtering followed by pseudo-labeling. Nodes filtered in this round are
/// not pseudo-labelled until the next one, so an original label never
/// turns into a pseudo-label within a round.
pub fn improve_labels(
    student_probs: &DenseMatrix,
    ens: &TeacherEnsemble,
    labels: &LabelState,
    params: &ImproveParams,
    round: usize,
) -> Result<(LabelState, RoundAudit)> {
    params.validate()?;
    let nodes = labels.supervising_nodes();
    let (filtered, removed) = filter_noisy(student_probs, labels, &nodes, params.r)?;
    let eligible: Vec<usize> = filtered
        .unsupervised_nodes()
        .into_iter()
        .filter(|&i| !labels.status(i).supervises())
        .collect();
    let student = top_per_class(student_probs, &eligible, params.rho);
    let teacher = top_per_class(&ens.summed(), &eligible, params.rho);
    let (out, added) = apply_pseudo(&filtered, &student, &teacher, round)?;
    Ok((
        out,
        RoundAudit {
            round,
            removed,
            added,
        },
    ))
}
