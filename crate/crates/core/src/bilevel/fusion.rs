use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{softmax_in_place, DenseMatrix, Dual};
use crate::teachers::TeacherEnsemble;

/// The `k x c` teacher weight matrix and its plain gradient-descent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherWeightMatrix {
    pub weights: DenseMatrix,
    pub lr: f64,
    pub updates: usize,
}

impl TeacherWeightMatrix {
    pub fn filled(k: usize, c: usize, value: f64, lr: f64) -> Self {
        Self {
            weights: DenseMatrix::filled(k, c, value),
            lr,
            updates: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.weights.rows()
    }

    pub fn classes(&self) -> usize {
        self.weights.cols()
    }
}

/// Index of the tangent direction for weight entry `(teacher, class)`.
#[inline]
pub fn direction(teacher: usize, class: usize, classes: usize) -> usize {
    teacher * classes + class
}

/// Fused soft labels, row-stochastic. When built by
/// [`fuse_soft_labels_dual`] it also carries one tangent per weight entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabels(pub Dual);

impl SoftLabels {
    pub fn values(&self) -> &DenseMatrix {
        &self.0.value
    }
}

fn check(ens: &TeacherEnsemble, w: &TeacherWeightMatrix) -> Result<()> {
    if ens.k() != w.k() || ens.classes() != w.classes() {
        return Err(Error::dim(
            "fuse_soft_labels",
            format!(
                "{} teachers x {} classes vs weights {:?}",
                ens.k(),
                ens.classes(),
                w.weights.shape()
            ),
        ));
    }
    Ok(())
}

/// Per-node logits `Σ_j W[j] ⊙ P_j[i]` followed by a row softmax.
pub fn fuse_soft_labels(ens: &TeacherEnsemble, w: &TeacherWeightMatrix) -> Result<SoftLabels> {
    check(ens, w)?;
    let (n, c) = (ens.n(), ens.classes());
    let mut fused = DenseMatrix::zeros(n, c);
    for i in 0..n {
        let row = fused.row_mut(i);
        for (j, p) in ens.probs().iter().enumerate() {
            for (k, (acc, &pk)) in row.iter_mut().zip(p.row(i)).enumerate() {
                *acc += w.weights[(j, k)] * pk;
            }
        }
        softmax_in_place(row);
    }
    Ok(SoftLabels(Dual::constant(fused)))
}

/// As [`fuse_soft_labels`], with tangents along every weight entry.
///
/// The logit tangent for entry `(j, c')` is `P_j[i, c']` on coordinate `c'`
/// only, so the soft-label tangent is
/// `Ỹ[i, c] (δ_{c c'} - Ỹ[i, c']) P_j[i, c']`.
pub fn fuse_soft_labels_dual(ens: &TeacherEnsemble, w: &TeacherWeightMatrix) -> Result<SoftLabels> {
    let SoftLabels(base) = fuse_soft_labels(ens, w)?;
    let y = base.value;
    let (n, c) = y.shape();
    let mut tangents = Vec::with_capacity(ens.k() * c);
    for p in ens.probs() {
        for cp in 0..c {
            let t = DenseMatrix::from_fn(n, c, |i, col| {
                let delta = if col == cp { 1.0 } else { 0.0 };
                y[(i, col)] * (delta - y[(i, cp)]) * p[(i, cp)]
            });
            tangents.push(t);
        }
    }
    Ok(SoftLabels(Dual::new(y, tangents)?))
}

/// Vector-Jacobian product of the fusion map: given `dφ/dỸ`, returns
/// `dφ/dW`.
pub fn fusion_vjp(
    ens: &TeacherEnsemble,
    soft: &DenseMatrix,
    grad_soft: &DenseMatrix,
) -> Result<DenseMatrix> {
    let (n, c) = soft.shape();
    if grad_soft.shape() != soft.shape() {
        return Err(Error::dim("fusion_vjp", "gradient shape"));
    }
    let mut g_logits = DenseMatrix::zeros(n, c);
    for i in 0..n {
        let y = soft.row(i);
        let g = grad_soft.row(i);
        let inner: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
        for k in 0..c {
            g_logits[(i, k)] = y[k] * (g[k] - inner);
        }
    }
    let mut out = DenseMatrix::zeros(ens.k(), c);
    for (j, p) in ens.probs().iter().enumerate() {
        for i in 0..n {
            for k in 0..c {
                out[(j, k)] += g_logits[(i, k)] * p[(i, k)];
            }
        }
    }
    Ok(out)
}
