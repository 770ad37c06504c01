//! Hand-derived reverse-mode gradients and forward-over-reverse tangents for
//! the fixed two-layer graph-convolution student:
//!
//! ```text
//! pre    = (Â X) W0
//! Z1     = relu(pre) ⊙ drop
//! S1     = Â Z1
//! logits = S1 W1
//! P      = softmax(logits)
//! loss   = mean_{i in rows} -Σ_c T[i,c] log P[i,c]
//! ```
//!
//! `T` is a target that may itself depend on the upper-level variables; its
//! tangents enter the gradient tangent through the `-dT` term of
//! `dL/dlogits`. ReLU's derivative at exactly zero is taken as zero.

use super::dense::{matmul, matmul_nt, matmul_tn, row_log_softmax, row_softmax, DenseMatrix};
use super::dual::Dual;
use super::sparse::{spmm, SparseAdjacency};
use crate::error::{Error, Result};

/// The graph-side inputs of the student network.
#[derive(Debug, Clone, Copy)]
pub struct GcnInputs<'a> {
    /// Normalized adjacency `Â`, symmetric.
    pub adj: &'a SparseAdjacency,
    /// Pre-propagated features `Â X`.
    pub propagated: &'a DenseMatrix,
    /// Multiplicative mask on the hidden layer (entries `0` or `1/(1-p)`).
    pub dropout: Option<&'a DenseMatrix>,
}

/// Masked soft-target cross-entropy.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a> {
    pub target: &'a Dual,
    pub rows: &'a [usize],
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct GcnForward {
    pub pre: DenseMatrix,
    pub hidden: DenseMatrix,
    pub propagated_hidden: DenseMatrix,
    pub logits: DenseMatrix,
    pub probs: DenseMatrix,
}

/// Output of [`grad_and_tangents`].
#[derive(Debug, Clone)]
pub struct GradTangents {
    pub loss: f64,
    /// Directional derivative of the loss per upper direction.
    pub loss_tangents: Vec<f64>,
    /// `[dL/dW0, dL/dW1]`.
    pub grads: [DenseMatrix; 2],
    /// Per direction, `[d(dL/dW0), d(dL/dW1)]`.
    pub grad_tangents: Vec<[DenseMatrix; 2]>,
}

fn check_finite(m: &DenseMatrix, stage: &'static str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric { stage })
    }
}

fn relu_gate(pre: &DenseMatrix, dropout: Option<&DenseMatrix>, m: &mut DenseMatrix) {
    for (idx, v) in m.data_mut().iter_mut().enumerate() {
        let open = pre.data()[idx] > 0.0;
        let keep = dropout.map_or(1.0, |d| d.data()[idx]);
        *v = if open { *v * keep } else { 0.0 };
    }
}

/// Runs the forward pass.
pub fn forward(inputs: &GcnInputs<'_>, w0: &DenseMatrix, w1: &DenseMatrix) -> Result<GcnForward> {
    let pre = matmul(inputs.propagated, w0)?;
    let mut hidden = pre.map(|v| v.max(0.0));
    if let Some(d) = inputs.dropout {
        if d.shape() != hidden.shape() {
            return Err(Error::dim(
                "forward",
                format!(
                    "dropout mask {:?} vs hidden {:?}",
                    d.shape(),
                    hidden.shape()
                ),
            ));
        }
        hidden = hidden.hadamard(d)?;
    }
    let propagated_hidden = spmm(inputs.adj, &hidden)?;
    let logits = matmul(&propagated_hidden, w1)?;
    check_finite(&logits, "forward")?;
    let probs = row_softmax(&logits);
    Ok(GcnForward {
        pre,
        hidden,
        propagated_hidden,
        logits,
        probs,
    })
}

fn validate_directions(params: &[Dual; 2], target: &Dual) -> Result<usize> {
    let dirs = params
        .iter()
        .chain(std::iter::once(target))
        .map(Dual::directions)
        .max()
        .unwrap_or(0);
    for (name, dual) in [("W0", &params[0]), ("W1", &params[1]), ("target", target)] {
        let k = dual.directions();
        if k != 0 && k != dirs {
            return Err(Error::dim(
                "grad_and_tangents",
                format!("{name} carries {k} tangents, expected 0 or {dirs}"),
            ));
        }
    }
    Ok(dirs)
}

/// Loss, exact gradients, and forward-over-reverse gradient tangents of the
/// student loss.
///
/// For each direction `d`, `grad_tangents[d]` is the derivative of `grads`
/// along the joint perturbation `(W0.tangents[d], W1.tangents[d],
/// target.tangents[d])`; a dual without tangents contributes zero.
pub fn grad_and_tangents(
    inputs: &GcnInputs<'_>,
    params: &[Dual; 2],
    loss: &LossSpec<'_>,
) -> Result<GradTangents> {
    let [w0, w1] = params;
    let dirs = validate_directions(params, loss.target)?;
    if loss.rows.is_empty() {
        return Err(Error::Argument("student loss over an empty mask".into()));
    }
    let fwd = forward(inputs, &w0.value, &w1.value)?;
    let target = &loss.target.value;
    if target.shape() != fwd.probs.shape() {
        return Err(Error::dim(
            "grad_and_tangents",
            format!(
                "target {:?} vs output {:?}",
                target.shape(),
                fwd.probs.shape()
            ),
        ));
    }
    let logp = row_log_softmax(&fwd.logits);
    let m = loss.rows.len() as f64;
    let classes = target.cols();

    let mut value = 0.0;
    let mut g_logits = DenseMatrix::zeros(fwd.logits.rows(), classes);
    for &i in loss.rows {
        let t = target.row(i);
        let t_sum: f64 = t.iter().sum();
        for c in 0..classes {
            if t[c] != 0.0 {
                value -= t[c] * logp[(i, c)];
            }
            g_logits[(i, c)] += (t_sum * fwd.probs[(i, c)] - t[c]) / m;
        }
    }
    value /= m;
    if !value.is_finite() {
        return Err(Error::Numeric { stage: "loss" });
    }

    let g_w1 = matmul_tn(&fwd.propagated_hidden, &g_logits)?;
    let g_s1 = matmul_nt(&g_logits, &w1.value)?;
    let mut g_pre = spmm(inputs.adj, &g_s1)?;
    relu_gate(&fwd.pre, inputs.dropout, &mut g_pre);
    let g_w0 = matmul_tn(inputs.propagated, &g_pre)?;
    check_finite(&g_w0, "gradient")?;
    check_finite(&g_w1, "gradient")?;

    let mut loss_tangents = Vec::with_capacity(dirs);
    let mut grad_tangents = Vec::with_capacity(dirs);
    for d in 0..dirs {
        let dw0 = w0.tangent(d);
        let dw1 = w1.tangent(d);
        let dt = loss.target.tangent(d);

        // forward tangent
        let (d_s1, d_logits) = match dw0 {
            Some(dw0) => {
                let mut d_hidden = matmul(inputs.propagated, dw0)?;
                relu_gate(&fwd.pre, inputs.dropout, &mut d_hidden);
                let d_s1 = spmm(inputs.adj, &d_hidden)?;
                let d_logits = matmul(&d_s1, &w1.value)?;
                (Some(d_s1), d_logits)
            }
            None => (None, DenseMatrix::zeros(fwd.logits.rows(), classes)),
        };
        let mut d_logits = d_logits;
        if let Some(dw1) = dw1 {
            d_logits.axpy(1.0, &matmul(&fwd.propagated_hidden, dw1)?)?;
        }

        // tangent of the loss and of dL/dlogits
        let mut d_value = 0.0;
        let mut dg_logits = DenseMatrix::zeros(fwd.logits.rows(), classes);
        for &i in loss.rows {
            let p = fwd.probs.row(i);
            let dz = d_logits.row(i);
            let t = target.row(i);
            let inner: f64 = p.iter().zip(dz).map(|(a, b)| a * b).sum();
            let t_sum: f64 = t.iter().sum();
            let dt_row = dt.map(|m| m.row(i));
            let dt_sum: f64 = dt_row.map_or(0.0, |r| r.iter().sum());
            for c in 0..classes {
                let dlogp = dz[c] - inner;
                let dp = p[c] * dlogp;
                let dtc = dt_row.map_or(0.0, |r| r[c]);
                d_value -= dtc * logp[(i, c)] + t[c] * dlogp;
                dg_logits[(i, c)] += (dt_sum * p[c] + t_sum * dp - dtc) / m;
            }
        }
        loss_tangents.push(d_value / m);

        // reverse sweep, differentiated
        let mut dg_w1 = matmul_tn(&fwd.propagated_hidden, &dg_logits)?;
        if let Some(d_s1) = &d_s1 {
            dg_w1.axpy(1.0, &matmul_tn(d_s1, &g_logits)?)?;
        }
        let mut dg_s1 = matmul_nt(&dg_logits, &w1.value)?;
        if let Some(dw1) = dw1 {
            dg_s1.axpy(1.0, &matmul_nt(&g_logits, dw1)?)?;
        }
        let mut dg_pre = spmm(inputs.adj, &dg_s1)?;
        relu_gate(&fwd.pre, inputs.dropout, &mut dg_pre);
        let dg_w0 = matmul_tn(inputs.propagated, &dg_pre)?;
        check_finite(&dg_w0, "tangent")?;
        check_finite(&dg_w1, "tangent")?;
        grad_tangents.push([dg_w0, dg_w1]);
    }

    Ok(GradTangents {
        loss: value,
        loss_tangents,
        grads: [g_w0, g_w1],
        grad_tangents,
    })
}
