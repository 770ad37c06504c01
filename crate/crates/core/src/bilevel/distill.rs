use serde::{Deserialize, Serialize};

use super::fusion::{fuse_soft_labels, fuse_soft_labels_dual, TeacherWeightMatrix};
use super::window::{hypergradient, upper_loss, upper_step, TangentBundle};
use crate::cleanselect::CleanNodeSet;
use crate::error::{Error, Result};
use crate::graphdata::Graph;
use crate::student::{accuracy, predict, StudentParams};
use crate::teachers::TeacherEnsemble;

/// Nodes the lower-level soft-label loss runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LowerRows {
    /// Nodes currently carrying a label (original or pseudo).
    Supervising,
    /// Every node; soft labels exist everywhere.
    #[default]
    All,
}

/// Bi-level schedule. Both levels use plain gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BilevelParams {
    /// Inner steps per window.
    pub window_length: usize,
    pub windows: usize,
    /// Inner (student) learning rate.
    pub eta_mu: f64,
    /// Upper (teacher weight) learning rate.
    pub eta_lr_upper: f64,
    /// Initial value of every teacher weight.
    pub w_init: f64,
    /// Plain soft-label steps with the initial weights before the first
    /// window of a fresh student.
    pub warmup_steps: usize,
    /// Re-initialize student and weights at every outer round.
    pub cold_start: bool,
    pub lower_rows: LowerRows,
}

impl Default for BilevelParams {
    fn default() -> Self {
        Self {
            window_length: 5,
            windows: 60,
            eta_mu: 0.5,
            eta_lr_upper: 10.0,
            w_init: 1.0,
            warmup_steps: 0,
            cold_start: false,
            lower_rows: LowerRows::default(),
        }
    }
}

impl BilevelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_mu >= 0.0 && self.eta_mu.is_finite()) {
            return Err(Error::Validation(format!(
                "eta_mu {} must be >= 0",
                self.eta_mu
            )));
        }
        if !(self.eta_lr_upper >= 0.0 && self.eta_lr_upper.is_finite()) {
            return Err(Error::Validation(format!(
                "eta_lr_upper {} must be >= 0",
                self.eta_lr_upper
            )));
        }
        if !self.w_init.is_finite() {
            return Err(Error::Validation("w_init must be finite".into()));
        }
        Ok(())
    }
}

/// One row of the per-window history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub round: usize,
    pub window: usize,
    /// Soft-label loss at the last inner step of the window.
    pub lower_loss: f64,
    /// Upper loss before the update; `None` when the update was skipped.
    pub upper_loss: Option<f64>,
    /// Upper loss after the update, re-evaluated with a fresh window from
    /// the same start; only recorded when `track_upper_decrease` is on.
    pub upper_loss_after: Option<f64>,
    pub val_acc: f64,
    pub weights: Vec<f64>,
}

/// What [`run_distillation`] hands back.
#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub student: StudentParams,
    pub weights: TeacherWeightMatrix,
    pub history: Vec<WindowRecord>,
    /// Validation-best student seen during this run, with its accuracy.
    pub best: Option<(StudentParams, f64)>,
}

/// Switches that do not belong to the user-facing schedule.
#[derive(Debug, Clone, Default)]
pub struct DistillOptions {
    /// Freeze the teacher weights (mean fusion when they start uniform).
    pub freeze_weights: bool,
    /// Round index written into the history.
    pub round: usize,
    /// Extra bookkeeping for tests: after each upper step, replay the
    /// window from its start with the new weights and record the upper loss.
    pub track_upper_decrease: bool,
}

/// Alternates `windows` times: fuse soft labels, run `window_length`
/// tangent-carrying inner steps over `train_rows`, then take one
/// hypergradient step on the weights against `clean`. Tangents restart at
/// zero for every window.
#[allow(clippy::too_many_arguments)]
pub fn run_distillation(
    ens: &TeacherEnsemble,
    graph: &Graph,
    train_rows: &[usize],
    clean: &CleanNodeSet,
    params: &BilevelParams,
    student: StudentParams,
    weights: TeacherWeightMatrix,
    validation: &[(usize, usize)],
    options: &DistillOptions,
) -> Result<DistillOutcome> {
    params.validate()?;
    if train_rows.is_empty() {
        return Err(Error::Argument("distillation needs training nodes".into()));
    }
    let mut student = student;
    let mut weights = weights;
    let shape = weights.weights.shape();
    let mut history = Vec::with_capacity(params.windows);
    let mut best: Option<(StudentParams, f64)> = None;
    let learn = !options.freeze_weights && !clean.is_empty();

    if params.warmup_steps > 0 {
        let soft = fuse_soft_labels(ens, &weights)?;
        let mut bundle = TangentBundle::untracked(&student, shape, params.eta_mu);
        for _ in 0..params.warmup_steps {
            bundle.step(&soft, graph, train_rows)?;
        }
        student = bundle.student();
    }

    for window in 0..params.windows {
        let start = student.clone();
        let (soft, mut bundle) = if learn {
            (
                fuse_soft_labels_dual(ens, &weights)?,
                TangentBundle::new(&student, shape, params.eta_mu),
            )
        } else {
            (
                fuse_soft_labels(ens, &weights)?,
                TangentBundle::untracked(&student, shape, params.eta_mu),
            )
        };
        let mut lower_loss = f64::NAN;
        for _ in 0..params.window_length {
            lower_loss = bundle.step(&soft, graph, train_rows)?;
        }
        student = bundle.student();
        if !student.is_finite() {
            return Err(Error::Numeric {
                stage: "inner step",
            });
        }

        let mut up = None;
        let mut up_after = None;
        if learn {
            up = upper_loss(&bundle, clean, graph)?;
            let g = hypergradient(&bundle, clean, graph)?;
            upper_step(&mut weights, &g)?;
            if options.track_upper_decrease {
                let replay = fuse_soft_labels(ens, &weights)?;
                let mut b = TangentBundle::untracked(&start, shape, params.eta_mu);
                for _ in 0..params.window_length {
                    b.step(&replay, graph, train_rows)?;
                }
                up_after = upper_loss(&b, clean, graph)?;
            }
        }

        let val_acc = accuracy(&predict(&student, graph)?, validation);
        if best.as_ref().is_none_or(|(_, acc)| val_acc > *acc) {
            best = Some((student.clone(), val_acc));
        }
        history.push(WindowRecord {
            round: options.round,
            window,
            lower_loss,
            upper_loss: up,
            upper_loss_after: up_after,
            val_acc,
            weights: weights.weights.data().to_vec(),
        });
    }

    Ok(DistillOutcome {
        student,
        weights,
        history,
        best,
    })
}
