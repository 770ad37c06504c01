use super::dense::{matmul, matmul_tn, row_log_softmax, row_softmax, DenseMatrix};
use crate::error::{Error, Result};

/// Lower clamp applied to probabilities before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

/// Mean over `rows` of `-sum_c target[i,c] * ln(max(pred[i,c], LOG_CLAMP))`.
pub fn cross_entropy(pred: &DenseMatrix, target: &DenseMatrix, rows: &[usize]) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(
            "cross_entropy",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    if rows.is_empty() {
        return Err(Error::Argument("cross_entropy over an empty mask".into()));
    }
    let mut total = 0.0;
    for &i in rows {
        if i >= pred.rows() {
            return Err(Error::dim("cross_entropy", format!("row {i} out of range")));
        }
        for (&p, &t) in pred.row(i).iter().zip(target.row(i)) {
            if t != 0.0 {
                total -= t * p.max(LOG_CLAMP).ln();
            }
        }
    }
    Ok(total / rows.len() as f64)
}

/// One-hot matrix for integer labels.
pub fn one_hot(labels: &[(usize, usize)], n: usize, classes: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n, classes);
    for &(node, class) in labels {
        m[(node, class)] = 1.0;
    }
    m
}

/// Loss and weight gradient of a bias-free linear softmax classifier
/// `softmax(features * weights)` under mean cross-entropy over labelled rows.
pub fn linear_softmax_grad(
    features: &DenseMatrix,
    weights: &DenseMatrix,
    labelled: &[(usize, usize)],
) -> Result<(f64, DenseMatrix)> {
    if labelled.is_empty() {
        return Err(Error::Argument("classifier loss over an empty mask".into()));
    }
    let logits = matmul(features, weights)?;
    let probs = row_softmax(&logits);
    let logp = row_log_softmax(&logits);
    let m = labelled.len() as f64;
    let mut g_logits = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for &(i, y) in labelled {
        loss -= logp[(i, y)];
        let row = g_logits.row_mut(i);
        for (c, g) in row.iter_mut().enumerate() {
            *g += probs[(i, c)] / m;
        }
        row[y] -= 1.0 / m;
    }
    let grad = matmul_tn(features, &g_logits)?;
    Ok((loss / m, grad))
}
