//! The two-layer graph-convolution student.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graphdata::Graph;
use crate::linalg::{self, one_hot, DenseMatrix, Dual, GcnInputs, LossSpec};
use crate::optim::Adam;
use crate::rng::{self, glorot_uniform};

/// Student weights: `W0` is `d x h`, `W1` is `h x c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentParams {
    pub w0: DenseMatrix,
    pub w1: DenseMatrix,
    /// Dropout rate on the hidden layer in training mode.
    pub dropout: f64,
}

impl StudentParams {
    pub fn hidden(&self) -> usize {
        self.w0.cols()
    }

    pub fn classes(&self) -> usize {
        self.w1.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.w0.is_finite() && self.w1.is_finite()
    }

    pub fn param_count(&self) -> usize {
        self.w0.data().len() + self.w1.data().len()
    }
}

/// Seeded uniform Glorot initialization with dropout 0.
pub fn init_params(d: usize, h: usize, c: usize, seed: u64) -> StudentParams {
    let mut rng = rng::stream(seed, "student-init");
    let w0 = glorot_uniform(d, h, &mut rng);
    let w1 = glorot_uniform(h, c, &mut rng);
    StudentParams {
        w0,
        w1,
        dropout: 0.0,
    }
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`,
/// `1 / (1 - rate)` otherwise.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, seed: u64) -> DenseMatrix {
    let mut rng = rng::stream(seed, "dropout");
    let keep = 1.0 / (1.0 - rate);
    DenseMatrix::from_fn(rows, cols, |_, _| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    })
}

fn mask_for(
    params: &StudentParams,
    graph: &Graph,
    train_mode: bool,
    seed: u64,
) -> Option<DenseMatrix> {
    (train_mode && params.dropout > 0.0)
        .then(|| dropout_mask(graph.n(), params.hidden(), params.dropout, seed))
}

/// Returns the hidden activations and class probabilities.
pub fn forward(
    params: &StudentParams,
    graph: &Graph,
    train_mode: bool,
    seed: u64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let mask = mask_for(params, graph, train_mode, seed);
    let inputs = GcnInputs {
        adj: graph.normalized(),
        propagated: graph.propagated_features(),
        dropout: mask.as_ref(),
    };
    let out = linalg::forward(&inputs, &params.w0, &params.w1)?;
    Ok((out.hidden, out.probs))
}

/// Evaluation-mode class probabilities.
pub fn predict_proba(params: &StudentParams, graph: &Graph) -> Result<DenseMatrix> {
    Ok(forward(params, graph, false, 0)?.1)
}

/// Evaluation-mode argmax per node.
pub fn predict(params: &StudentParams, graph: &Graph) -> Result<Vec<usize>> {
    let p = predict_proba(params, graph)?;
    Ok((0..p.rows()).map(|i| p.row_argmax(i)).collect())
}

/// Fraction of `(node, label)` pairs predicted correctly.
pub fn accuracy(predictions: &[usize], pairs: &[(usize, usize)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let hits = pairs.iter().filter(|&&(i, y)| predictions[i] == y).count();
    hits as f64 / pairs.len() as f64
}

/// Mean cross-entropy against `target` over `rows` and its gradients
/// `[dL/dW0, dL/dW1]`.
pub fn loss_and_grad(
    params: &StudentParams,
    graph: &Graph,
    target: &DenseMatrix,
    rows: &[usize],
    dropout: Option<&DenseMatrix>,
) -> Result<(f64, [DenseMatrix; 2])> {
    let inputs = GcnInputs {
        adj: graph.normalized(),
        propagated: graph.propagated_features(),
        dropout,
    };
    let target = Dual::constant(target.clone());
    let out = linalg::grad_and_tangents(
        &inputs,
        &[
            Dual::constant(params.w0.clone()),
            Dual::constant(params.w1.clone()),
        ],
        &LossSpec {
            target: &target,
            rows,
        },
    )?;
    Ok((out.loss, out.grads))
}

/// Supervised GCN training recipe used by the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupervisedParams {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: usize,
}

impl Default for SupervisedParams {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.01,
            weight_decay: 5e-4,
            patience: 30,
        }
    }
}

/// Per-epoch record of supervised training.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: f64,
}

/// Adam training on hard labels with dropout, weight decay, and early
/// stopping on validation accuracy. Returns the validation-best parameters.
pub fn train_supervised(
    mut params: StudentParams,
    graph: &Graph,
    train: &[(usize, usize)],
    validation: &[(usize, usize)],
    cfg: &SupervisedParams,
    seed: u64,
) -> Result<(StudentParams, Vec<EpochRecord>)> {
    let c = params.classes();
    let target = one_hot(train, graph.n(), c);
    let rows: Vec<usize> = train.iter().map(|&(i, _)| i).collect();
    let mut opt = Adam::new(cfg.lr, &[params.w0.shape(), params.w1.shape()])
        .with_weight_decay(cfg.weight_decay);
    let mut best = params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mask = mask_for(
            &params,
            graph,
            true,
            rng::derive_seed(seed, &format!("epoch{epoch}")),
        );
        let (loss, grads) = loss_and_grad(&params, graph, &target, &rows, mask.as_ref())?;
        let StudentParams { w0, w1, .. } = &mut params;
        opt.step(&mut [w0, w1], &grads);
        let val_acc = accuracy(&predict(&params, graph)?, validation);
        history.push(EpochRecord {
            epoch,
            loss,
            val_acc,
        });
        if val_acc > best_acc {
            best_acc = val_acc;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, history))
}
