use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::labels::LabelState;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseAdjacency};
use crate::rng;

/// Parameters of a balanced stochastic block model with Gaussian features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmParams {
    pub n: usize,
    pub c: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Feature dimension; must be at least `c`.
    pub d: usize,
    /// Standard deviation of the Gaussian added to each class mean.
    pub feature_noise: f64,
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.c < 2 || self.n < self.c {
            return Err(Error::Validation(format!(
                "SBM needs c >= 2 and n >= c (n = {}, c = {})",
                self.n, self.c
            )));
        }
        if !(0.0 <= self.p_inter && self.p_inter < self.p_intra && self.p_intra <= 1.0) {
            return Err(Error::Validation(format!(
                "SBM needs 0 <= p_inter < p_intra <= 1 (got {}, {})",
                self.p_inter, self.p_intra
            )));
        }
        if self.d < self.c {
            return Err(Error::Validation(format!(
                "SBM feature dimension {} smaller than class count {}",
                self.d, self.c
            )));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::Validation("feature_noise must be >= 0".into()));
        }
        Ok(())
    }

    /// Block of node `i`; contiguous blocks whose sizes differ by at most one.
    pub fn block_of(&self, i: usize) -> usize {
        i * self.c / self.n
    }
}

/// Samples a graph and labels every node with its block (status `original`).
///
/// Class `k` has mean feature vector `e_k`, so separability is governed by
/// `feature_noise` alone.
pub fn generate_sbm(params: &SbmParams, seed: u64) -> Result<(Graph, LabelState)> {
    params.validate()?;
    let n = params.n;
    let blocks: Vec<usize> = (0..n).map(|i| params.block_of(i)).collect();

    let mut edge_rng = rng::stream(seed, "sbm-edges");
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if blocks[i] == blocks[j] {
                params.p_intra
            } else {
                params.p_inter
            };
            if edge_rng.random::<f64>() < p {
                triplets.push((i, j, 1.0));
                triplets.push((j, i, 1.0));
            }
        }
    }
    let adjacency = SparseAdjacency::from_triplets(n, &triplets)?;

    let mut feat_rng = rng::stream(seed, "sbm-features");
    let features = DenseMatrix::from_fn(n, params.d, |r, c| {
        let mean = if c == blocks[r] { 1.0 } else { 0.0 };
        if params.feature_noise == 0.0 {
            mean
        } else {
            let z: f64 = StandardNormal.sample(&mut feat_rng);
            mean + params.feature_noise * z
        }
    });

    let labels = LabelState::from_labels(&blocks, params.c)?;
    Ok((Graph::new(features, adjacency)?, labels))
}
