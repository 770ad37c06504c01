//! Label-free node encoders. None of them can see labels: `fit` only takes
//! the graph.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::Graph;
use crate::linalg::{matmul, matmul_tn, spmm, DenseMatrix};
use crate::optim::Adam;
use crate::rng::{self, glorot_uniform};

/// A self-supervised encoder producing one embedding row per node.
pub trait TeacherEncoder: Send + Sync {
    fn name(&self) -> &'static str;

    /// Trains without labels. Deterministic in `seed`.
    fn fit(&mut self, graph: &Graph, seed: u64) -> Result<()>;

    /// Embeds every node; deterministic after `fit`.
    fn embed(&self, graph: &Graph) -> Result<DenseMatrix>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Propagation,
    Contrastive,
    Reconstruction,
}

/// Shared encoder hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderParams {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for EncoderParams {
    fn default() -> Self {
        Self {
            dim: 16,
            epochs: 100,
            lr: 0.01,
        }
    }
}

pub fn make_encoder(kind: EncoderKind, params: &EncoderParams) -> Box<dyn TeacherEncoder> {
    match kind {
        EncoderKind::Propagation => Box::new(PropagationEncoder::new(params.dim)),
        EncoderKind::Contrastive => Box::new(ContrastiveEncoder::new(params)),
        EncoderKind::Reconstruction => Box::new(ReconstructionEncoder::new(params)),
    }
}

/// The three built-in encoders, in the order propagation, contrastive,
/// reconstruction.
pub fn builtin_encoders(params: &EncoderParams) -> Vec<Box<dyn TeacherEncoder>> {
    [
        EncoderKind::Propagation,
        EncoderKind::Contrastive,
        EncoderKind::Reconstruction,
    ]
    .into_iter()
    .map(|k| make_encoder(k, params))
    .collect()
}

fn not_fitted(name: &'static str) -> Error {
    Error::Argument(format!("encoder `{name}` used before fit"))
}

/// `Â² X` followed by a fixed random orthonormal projection.
#[derive(Debug, Clone)]
pub struct PropagationEncoder {
    dim: usize,
    identity: bool,
    projection: Option<DenseMatrix>,
}

impl PropagationEncoder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            identity: false,
            projection: None,
        }
    }

    /// Skips the projection: embeddings are exactly `Â² X`.
    pub fn identity() -> Self {
        Self {
            dim: 0,
            identity: true,
            projection: None,
        }
    }
}

/// `rows x cols` matrix whose columns (if `cols <= rows`) or rows (otherwise)
/// are orthonormal, from Gram-Schmidt on a Gaussian draw.
fn random_orthonormal(rows: usize, cols: usize, rng: &mut rng::Rng) -> DenseMatrix {
    let transpose = cols > rows;
    let (len, count) = if transpose {
        (cols, rows)
    } else {
        (rows, cols)
    };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    if transpose {
        DenseMatrix::from_fn(rows, cols, |r, c| basis[r][c])
    } else {
        DenseMatrix::from_fn(rows, cols, |r, c| basis[c][r])
    }
}

impl TeacherEncoder for PropagationEncoder {
    fn name(&self) -> &'static str {
        "propagation"
    }

    fn fit(&mut self, graph: &Graph, seed: u64) -> Result<()> {
        if !self.identity {
            let mut rng = rng::stream(seed, "encoder-propagation");
            self.projection = Some(random_orthonormal(graph.feature_dim(), self.dim, &mut rng));
        }
        Ok(())
    }

    fn embed(&self, graph: &Graph) -> Result<DenseMatrix> {
        let two_hop = spmm(graph.normalized(), graph.propagated_features())?;
        if self.identity {
            return Ok(two_hop);
        }
        let p = self
            .projection
            .as_ref()
            .ok_or_else(|| not_fitted(self.name()))?;
        matmul(&two_hop, p)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary discrimination loss of a DGI-style objective and its gradients.
///
/// `H = relu(ÂX W)`, `H̃ = relu(ÂX̃ W)`, summary `s = sigmoid(mean_rows H)`,
/// scores `H M s` (positive) and `H̃ M s` (negative); the loss is the mean
/// binary cross-entropy over all `2n` scores.
pub(crate) fn contrastive_loss_grad(
    propagated: &DenseMatrix,
    corrupted: &DenseMatrix,
    w: &DenseMatrix,
    disc: &DenseMatrix,
) -> Result<(f64, DenseMatrix, DenseMatrix)> {
    let n = propagated.rows();
    let dim = w.cols();
    let pre = matmul(propagated, w)?;
    let pre_c = matmul(corrupted, w)?;
    let h = pre.map(|v| v.max(0.0));
    let hc = pre_c.map(|v| v.max(0.0));
    let mean: Vec<f64> = (0..dim)
        .map(|k| (0..n).map(|i| h[(i, k)]).sum::<f64>() / n as f64)
        .collect();
    let s: Vec<f64> = mean.iter().map(|&m| sigmoid(m)).collect();
    let v: Vec<f64> = (0..dim)
        .map(|r| disc.row(r).iter().zip(&s).map(|(a, b)| a * b).sum())
        .collect();
    let score =
        |m: &DenseMatrix, i: usize| -> f64 { m.row(i).iter().zip(&v).map(|(a, b)| a * b).sum() };

    let scale = 1.0 / (2 * n) as f64;
    let mut loss = 0.0;
    let mut da = vec![0.0; n];
    let mut db = vec![0.0; n];
    for i in 0..n {
        let a = score(&h, i);
        let b = score(&hc, i);
        // -log σ(a) = softplus(-a); -log(1 - σ(b)) = softplus(b)
        loss += scale * (softplus(-a) + softplus(b));
        da[i] = scale * (sigmoid(a) - 1.0);
        db[i] = scale * sigmoid(b);
    }

    let mut dv = vec![0.0; dim];
    for i in 0..n {
        for k in 0..dim {
            dv[k] += h[(i, k)] * da[i] + hc[(i, k)] * db[i];
        }
    }
    let g_disc = DenseMatrix::from_fn(dim, dim, |r, c| dv[r] * s[c]);
    // through the summary: ds_k = M^T dv, then sigmoid', then mean
    let ds: Vec<f64> = (0..dim)
        .map(|c| (0..dim).map(|r| disc[(r, c)] * dv[r]).sum::<f64>() * s[c] * (1.0 - s[c]))
        .collect();
    let mut gh = DenseMatrix::from_fn(n, dim, |i, k| da[i] * v[k] + ds[k] / n as f64);
    let mut ghc = DenseMatrix::from_fn(n, dim, |i, k| db[i] * v[k]);
    for (g, &p) in gh.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    for (g, &p) in ghc.data_mut().iter_mut().zip(pre_c.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    let mut g_w = matmul_tn(propagated, &gh)?;
    g_w.axpy(1.0, &matmul_tn(corrupted, &ghc)?)?;
    Ok((loss, g_w, g_disc))
}

/// One graph-convolution layer trained to score real nodes above
/// feature-shuffled corruptions against a graph summary.
#[derive(Debug, Clone)]
pub struct ContrastiveEncoder {
    params: EncoderParams,
    weights: Option<DenseMatrix>,
    loss_history: Vec<f64>,
}

impl ContrastiveEncoder {
    pub fn new(params: &EncoderParams) -> Self {
        Self {
            params: params.clone(),
            weights: None,
            loss_history: Vec::new(),
        }
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }
}

impl TeacherEncoder for ContrastiveEncoder {
    fn name(&self) -> &'static str {
        "contrastive"
    }

    fn fit(&mut self, graph: &Graph, seed: u64) -> Result<()> {
        let mut rng = rng::stream(seed, "encoder-contrastive");
        let d = graph.feature_dim();
        let dim = self.params.dim;
        let mut w = glorot_uniform(d, dim, &mut rng);
        let mut disc = glorot_uniform(dim, dim, &mut rng);
        let mut opt = Adam::new(self.params.lr, &[(d, dim), (dim, dim)]);
        let ax = graph.propagated_features();
        let mut perm: Vec<usize> = (0..graph.n()).collect();
        self.loss_history.clear();
        for _ in 0..self.params.epochs {
            perm.shuffle(&mut rng);
            let shuffled = graph.features().select_rows(&perm);
            let corrupted = spmm(graph.normalized(), &shuffled)?;
            let (loss, gw, gd) = contrastive_loss_grad(ax, &corrupted, &w, &disc)?;
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    stage: "contrastive encoder",
                });
            }
            self.loss_history.push(loss);
            opt.step(&mut [&mut w, &mut disc], &[gw, gd]);
        }
        self.weights = Some(w);
        Ok(())
    }

    fn embed(&self, graph: &Graph) -> Result<DenseMatrix> {
        let w = self
            .weights
            .as_ref()
            .ok_or_else(|| not_fitted(self.name()))?;
        Ok(matmul(graph.propagated_features(), w)?.map(|v| v.max(0.0)))
    }
}

/// Mean logistic loss of `σ(h_u · h_v)` against `y` for `H = ÂX W`.
pub(crate) fn reconstruction_loss_grad(
    propagated: &DenseMatrix,
    w: &DenseMatrix,
    pairs: &[(usize, usize, f64)],
) -> Result<(f64, DenseMatrix)> {
    let h = matmul(propagated, w)?;
    let mut gh = DenseMatrix::zeros(h.rows(), h.cols());
    let m = pairs.len().max(1) as f64;
    let mut loss = 0.0;
    for &(u, v, y) in pairs {
        let s: f64 = h.row(u).iter().zip(h.row(v)).map(|(a, b)| a * b).sum();
        loss += (softplus(s) - y * s) / m;
        let g = (sigmoid(s) - y) / m;
        for k in 0..h.cols() {
            let (hu, hv) = (h[(u, k)], h[(v, k)]);
            gh[(u, k)] += g * hv;
            gh[(v, k)] += g * hu;
        }
    }
    Ok((loss, matmul_tn(propagated, &gh)?))
}

/// One linear graph-convolution layer whose embedding inner products
/// predict adjacency (sampled positive edges against random pairs).
#[derive(Debug, Clone)]
pub struct ReconstructionEncoder {
    params: EncoderParams,
    weights: Option<DenseMatrix>,
    loss_history: Vec<f64>,
}

impl ReconstructionEncoder {
    pub fn new(params: &EncoderParams) -> Self {
        Self {
            params: params.clone(),
            weights: None,
            loss_history: Vec::new(),
        }
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }
}

impl TeacherEncoder for ReconstructionEncoder {
    fn name(&self) -> &'static str {
        "reconstruction"
    }

    fn fit(&mut self, graph: &Graph, seed: u64) -> Result<()> {
        let mut rng = rng::stream(seed, "encoder-reconstruction");
        let d = graph.feature_dim();
        let n = graph.n();
        let mut w = glorot_uniform(d, self.params.dim, &mut rng);
        let mut opt = Adam::new(self.params.lr, &[(d, self.params.dim)]);
        let edges: Vec<(usize, usize)> = graph
            .adjacency()
            .iter()
            .filter(|&(r, c, _)| r < c)
            .map(|(r, c, _)| (r, c))
            .collect();
        self.loss_history.clear();
        if n < 2 {
            self.weights = Some(w);
            return Ok(());
        }
        for _ in 0..self.params.epochs {
            let mut pairs: Vec<(usize, usize, f64)> =
                edges.iter().map(|&(u, v)| (u, v, 1.0)).collect();
            for _ in 0..edges.len().max(1) {
                let u = rng.random_range(0..n);
                let mut v = rng.random_range(0..n - 1);
                if v >= u {
                    v += 1;
                }
                pairs.push((u, v, 0.0));
            }
            let (loss, gw) = reconstruction_loss_grad(graph.propagated_features(), &w, &pairs)?;
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    stage: "reconstruction encoder",
                });
            }
            self.loss_history.push(loss);
            opt.step(&mut [&mut w], &[gw]);
        }
        self.weights = Some(w);
        Ok(())
    }

    fn embed(&self, graph: &Graph) -> Result<DenseMatrix> {
        let w = self
            .weights
            .as_ref()
            .ok_or_else(|| not_fitted(self.name()))?;
        matmul(graph.propagated_features(), w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdata::{generate_sbm, SbmParams};

    fn fd_check(f: impl Fn(&DenseMatrix) -> f64, x: &DenseMatrix, analytic: &DenseMatrix) {
        let h = 1e-6;
        let mut fd = DenseMatrix::zeros(x.rows(), x.cols());
        for i in 0..x.data().len() {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let mut m = x.clone();
            m.data_mut()[i] -= h;
            fd.data_mut()[i] = (f(&p) - f(&m)) / (2.0 * h);
        }
        let err = fd.sub(analytic).unwrap().frobenius_norm()
            / fd.frobenius_norm().max(analytic.frobenius_norm());
        assert!(err < 1e-6, "relative error {err}");
    }

    fn small_graph() -> Graph {
        let p = SbmParams {
            n: 12,
            c: 2,
            p_intra: 0.6,
            p_inter: 0.1,
            d: 4,
            feature_noise: 0.5,
        };
        generate_sbm(&p, 4).unwrap().0
    }

    #[test]
    fn contrastive_gradients_match_finite_differences() {
        let g = small_graph();
        let mut rng = rng::stream(1, "t");
        let w = glorot_uniform(4, 3, &mut rng);
        let disc = glorot_uniform(3, 3, &mut rng);
        let perm: Vec<usize> = (0..12).rev().collect();
        let corrupted = spmm(g.normalized(), &g.features().select_rows(&perm)).unwrap();
        let ax = g.propagated_features();
        let (_, gw, gd) = contrastive_loss_grad(ax, &corrupted, &w, &disc).unwrap();
        fd_check(
            |w| contrastive_loss_grad(ax, &corrupted, w, &disc).unwrap().0,
            &w,
            &gw,
        );
        fd_check(
            |d| contrastive_loss_grad(ax, &corrupted, &w, d).unwrap().0,
            &disc,
            &gd,
        );
    }

    #[test]
    fn reconstruction_gradients_match_finite_differences() {
        let g = small_graph();
        let mut rng = rng::stream(2, "t");
        let w = glorot_uniform(4, 3, &mut rng);
        let pairs = [(0, 1, 1.0), (2, 7, 0.0), (3, 4, 1.0), (5, 11, 0.0)];
        let ax = g.propagated_features();
        let (_, gw) = reconstruction_loss_grad(ax, &w, &pairs).unwrap();
        fd_check(
            |w| reconstruction_loss_grad(ax, w, &pairs).unwrap().0,
            &w,
            &gw,
        );
    }

    #[test]
    fn orthonormal_projection() {
        let mut rng = rng::stream(3, "t");
        let p = random_orthonormal(6, 4, &mut rng);
        let gram = matmul_tn(&p, &p).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((gram[(r, c)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn embed_before_fit_errors() {
        let g = small_graph();
        let e = ContrastiveEncoder::new(&EncoderParams::default());
        assert!(e.embed(&g).is_err());
    }
}
