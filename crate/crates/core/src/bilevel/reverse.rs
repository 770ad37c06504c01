//! Trajectory-storing reverse-mode hypergradient over one window.
//!
//! This is a cross-check for the forward-mode accumulation, not a training
//! path: it stores every intermediate student and sweeps the adjoint
//! backwards,
//!
//! ```text
//! ā_t     = ∂L_w/∂θ_t
//! ḡ_Ỹ    += -η ∂<∇L_s(θ_{s-1}, Ỹ), ā_s>/∂Ỹ
//! ā_{s-1} = ā_s - η H(θ_{s-1}) ā_s
//! ```
//!
//! then maps `ḡ_Ỹ` back to the teacher weights through the fusion VJP.
//! Because the lower loss is linear in `Ỹ`, the mixed term reduces to
//! `-(dlogP_i(ā))/m` on each training row.

use super::fusion::{fuse_soft_labels, fusion_vjp, TeacherWeightMatrix};
use crate::cleanselect::CleanNodeSet;
use crate::error::Result;
use crate::graphdata::Graph;
use crate::linalg::{
    forward, grad_and_tangents, matmul, one_hot, spmm, DenseMatrix, Dual, GcnInputs, LossSpec,
};
use crate::student::StudentParams;
use crate::teachers::TeacherEnsemble;

fn inputs(graph: &Graph) -> GcnInputs<'_> {
    GcnInputs {
        adj: graph.normalized(),
        propagated: graph.propagated_features(),
        dropout: None,
    }
}

/// Probabilities and the logit derivative along parameter direction `dir`.
fn logit_jvp(
    graph: &Graph,
    theta: &[DenseMatrix; 2],
    dir: &[DenseMatrix; 2],
) -> Result<(DenseMatrix, DenseMatrix)> {
    let fwd = forward(&inputs(graph), &theta[0], &theta[1])?;
    let mut d_hidden = matmul(graph.propagated_features(), &dir[0])?;
    for (v, &p) in d_hidden.data_mut().iter_mut().zip(fwd.pre.data()) {
        if p <= 0.0 {
            *v = 0.0;
        }
    }
    let d_s1 = spmm(graph.normalized(), &d_hidden)?;
    let mut d_logits = matmul(&d_s1, &theta[1])?;
    d_logits.axpy(1.0, &matmul(&fwd.propagated_hidden, &dir[1])?)?;
    Ok((fwd.probs, d_logits))
}

fn plain_grad(
    graph: &Graph,
    theta: &[DenseMatrix; 2],
    target: &Dual,
    rows: &[usize],
) -> Result<[DenseMatrix; 2]> {
    let params = [
        Dual::constant(theta[0].clone()),
        Dual::constant(theta[1].clone()),
    ];
    Ok(grad_and_tangents(&inputs(graph), &params, &LossSpec { target, rows })?.grads)
}

/// Reverse-mode hypergradient of the upper loss after `steps` plain
/// gradient steps from `start` on the soft labels fused with `weights`.
#[allow(clippy::too_many_arguments)]
pub fn reverse_hypergradient(
    ens: &TeacherEnsemble,
    weights: &TeacherWeightMatrix,
    start: &StudentParams,
    graph: &Graph,
    rows: &[usize],
    clean: &CleanNodeSet,
    eta: f64,
    steps: usize,
) -> Result<DenseMatrix> {
    let (k, c) = weights.weights.shape();
    if steps == 0 || clean.is_empty() {
        return Ok(DenseMatrix::zeros(k, c));
    }
    let soft = fuse_soft_labels(ens, weights)?.0;

    let mut trajectory = Vec::with_capacity(steps + 1);
    let mut theta = [start.w0.clone(), start.w1.clone()];
    for _ in 0..steps {
        let g = plain_grad(graph, &theta, &soft, rows)?;
        let next = [
            theta[0].sub(&g[0].scale(eta))?,
            theta[1].sub(&g[1].scale(eta))?,
        ];
        trajectory.push(std::mem::replace(&mut theta, next));
    }

    let pairs = clean.pairs();
    let clean_rows: Vec<usize> = pairs.iter().map(|&(i, _)| i).collect();
    let clean_target = Dual::constant(one_hot(&pairs, graph.n(), c));
    let mut adjoint = plain_grad(graph, &theta, &clean_target, &clean_rows)?;

    let m = rows.len() as f64;
    let mut grad_soft = DenseMatrix::zeros(graph.n(), c);
    let constant_soft = Dual::constant(soft.value.clone());
    for theta in trajectory.iter().rev() {
        let (probs, d_logits) = logit_jvp(graph, theta, &adjoint)?;
        for &i in rows {
            let inner: f64 = probs
                .row(i)
                .iter()
                .zip(d_logits.row(i))
                .map(|(p, z)| p * z)
                .sum();
            for col in 0..c {
                grad_soft[(i, col)] += eta * (d_logits[(i, col)] - inner) / m;
            }
        }
        let params = [
            Dual::new(theta[0].clone(), vec![adjoint[0].clone()])?,
            Dual::new(theta[1].clone(), vec![adjoint[1].clone()])?,
        ];
        let hvp = grad_and_tangents(
            &inputs(graph),
            &params,
            &LossSpec {
                target: &constant_soft,
                rows,
            },
        )?;
        let [h0, h1] = &hvp.grad_tangents[0];
        adjoint[0].axpy(-eta, h0)?;
        adjoint[1].axpy(-eta, h1)?;
    }
    fusion_vjp(ens, &soft.value, &grad_soft)
}
