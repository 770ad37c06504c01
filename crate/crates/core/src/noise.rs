//! Label corruption through an explicit class-transition matrix.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{GroundTruth, LabelState};
use crate::linalg::DenseMatrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// Flip to any other class with equal probability.
    Uniform,
    /// Flip only to the designated pair class.
    Pair,
}

/// Runner-facing noise settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub rate: f64,
    /// Explicit `pair[i]` targets for pair noise; `(i + 1) mod c` otherwise.
    #[serde(default)]
    pub pair_map: Option<Vec<usize>>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Uniform,
            rate: 0.0,
            pair_map: None,
        }
    }
}

/// A fully specified noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub classes: usize,
    /// `transition[(i, j)]` is the probability that true class `i` is
    /// observed as `j`. Rows sum to one.
    pub transition: DenseMatrix,
}

/// Builds the transition matrix with the default pair map.
pub fn build_transition(kind: NoiseKind, rate: f64, classes: usize) -> Result<NoiseSpec> {
    build_transition_with_pairs(kind, rate, classes, None)
}

pub fn build_transition_with_pairs(
    kind: NoiseKind,
    rate: f64,
    classes: usize,
    pair_map: Option<&[usize]>,
) -> Result<NoiseSpec> {
    if classes < 2 {
        return Err(Error::Validation(format!(
            "noise needs at least 2 classes, got {classes}"
        )));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Validation(format!(
            "noise rate {rate} outside [0, 1]"
        )));
    }
    let mut q = DenseMatrix::zeros(classes, classes);
    match kind {
        NoiseKind::Uniform => {
            let off = rate / (classes - 1) as f64;
            for i in 0..classes {
                for j in 0..classes {
                    q[(i, j)] = if i == j { 1.0 - rate } else { off };
                }
            }
        }
        NoiseKind::Pair => {
            if rate >= 0.5 {
                log::warn!("pair noise rate {rate} >= 0.5 makes the pair class dominant");
            }
            let pairs: Vec<usize> = match pair_map {
                Some(p) => {
                    if p.len() != classes {
                        return Err(Error::Validation(format!(
                            "pair map has {} entries for {classes} classes",
                            p.len()
                        )));
                    }
                    for (i, &j) in p.iter().enumerate() {
                        if j >= classes || j == i {
                            return Err(Error::Validation(format!(
                                "pair map entry {i} -> {j} invalid"
                            )));
                        }
                    }
                    p.to_vec()
                }
                None => (0..classes).map(|i| (i + 1) % classes).collect(),
            };
            for (i, &j) in pairs.iter().enumerate() {
                q[(i, i)] = 1.0 - rate;
                q[(i, j)] += rate;
            }
        }
    }
    Ok(NoiseSpec {
        kind,
        rate,
        classes,
        transition: q,
    })
}

impl NoiseSpec {
    pub fn from_config(cfg: &NoiseConfig, classes: usize) -> Result<Self> {
        build_transition_with_pairs(cfg.kind, cfg.rate, classes, cfg.pair_map.as_deref())
    }

    fn sample(&self, y: usize, u: f64) -> usize {
        let row = self.transition.row(y);
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // u landed in the rounding slack above the last partial sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(y)
    }
}

/// Resamples the label of every masked, labelled node from its transition
/// row. Returns the corrupted state and the clean labels as ground truth.
pub fn corrupt(
    labels: &LabelState,
    mask: &[usize],
    spec: &NoiseSpec,
    seed: u64,
) -> Result<(LabelState, GroundTruth)> {
    if spec.classes != labels.classes() {
        return Err(Error::Validation(format!(
            "noise built for {} classes, labels have {}",
            spec.classes,
            labels.classes()
        )));
    }
    let truth = GroundTruth::capture(labels);
    let mut out = labels.clone();
    let mut rng = rng::stream(seed, "noise");
    let mut sorted = mask.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for i in sorted {
        let u: f64 = rng.random();
        if let Some(y) = labels.label(i) {
            out.set_original(i, spec.sample(y, u))?;
        }
    }
    Ok((out, truth))
}
