use super::fusion::{SoftLabels, TeacherWeightMatrix};
use crate::cleanselect::CleanNodeSet;
use crate::error::{Error, Result};
use crate::graphdata::Graph;
use crate::linalg::{grad_and_tangents, one_hot, DenseMatrix, Dual, GcnInputs, LossSpec};
use crate::student::StudentParams;

/// Student parameters paired with their Jacobian with respect to the
/// teacher weights, one tangent per weight entry, over one unrolled window.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentBundle {
    /// `[W0, W1]` with `k * c` tangents each (or none when not tracking).
    pub params: [Dual; 2],
    pub steps: usize,
    pub eta: f64,
    weight_shape: (usize, usize),
    dropout: f64,
}

impl TangentBundle {
    /// Starts a window at `student` with all tangents zero.
    pub fn new(student: &StudentParams, weight_shape: (usize, usize), eta: f64) -> Self {
        let dirs = weight_shape.0 * weight_shape.1;
        Self {
            params: [
                Dual::with_zero_tangents(student.w0.clone(), dirs),
                Dual::with_zero_tangents(student.w1.clone(), dirs),
            ],
            steps: 0,
            eta,
            weight_shape,
            dropout: student.dropout,
        }
    }

    /// A bundle that only tracks values (no tangent directions).
    pub fn untracked(student: &StudentParams, weight_shape: (usize, usize), eta: f64) -> Self {
        Self {
            params: [
                Dual::constant(student.w0.clone()),
                Dual::constant(student.w1.clone()),
            ],
            steps: 0,
            eta,
            weight_shape,
            dropout: student.dropout,
        }
    }

    pub fn directions(&self) -> usize {
        self.params[0].directions()
    }

    pub fn student(&self) -> StudentParams {
        StudentParams {
            w0: self.params[0].value.clone(),
            w1: self.params[1].value.clone(),
            dropout: self.dropout,
        }
    }

    /// One gradient step on the soft-label loss over `rows`, carrying the
    /// tangents along: `Z_t = Z_{t-1} - η d(∇L)` where `d(∇L)` is the
    /// forward-mode derivative of the gradient along `(Z_{t-1}, dỸ)`.
    /// Returns the loss before the step.
    pub fn step(&mut self, soft: &SoftLabels, graph: &Graph, rows: &[usize]) -> Result<f64> {
        let inputs = GcnInputs {
            adj: graph.normalized(),
            propagated: graph.propagated_features(),
            dropout: None,
        };
        let target_dirs = soft.0.directions();
        if self.directions() > 0 && target_dirs != 0 && target_dirs != self.directions() {
            return Err(Error::dim(
                "inner_step",
                format!(
                    "soft labels carry {target_dirs} tangents, bundle {}",
                    self.directions()
                ),
            ));
        }
        // untracked bundle: drop the target tangents too
        let constant_target;
        let target = if self.directions() == 0 && target_dirs > 0 {
            constant_target = Dual::constant(soft.0.value.clone());
            &constant_target
        } else {
            &soft.0
        };
        let out = grad_and_tangents(&inputs, &self.params, &LossSpec { target, rows })?;
        let eta = self.eta;
        for (p, g) in self.params.iter_mut().zip(&out.grads) {
            p.value.axpy(-eta, g)?;
        }
        for (d, [g0, g1]) in out.grad_tangents.iter().enumerate() {
            self.params[0].tangents[d].axpy(-eta, g0)?;
            self.params[1].tangents[d].axpy(-eta, g1)?;
        }
        self.steps += 1;
        Ok(out.loss)
    }
}

/// Consuming form of [`TangentBundle::step`].
pub fn inner_step(
    mut bundle: TangentBundle,
    soft: &SoftLabels,
    graph: &Graph,
    rows: &[usize],
) -> Result<TangentBundle> {
    bundle.step(soft, graph, rows)?;
    Ok(bundle)
}

fn upper_pieces(
    bundle: &TangentBundle,
    clean: &CleanNodeSet,
    graph: &Graph,
) -> Result<(f64, [DenseMatrix; 2])> {
    let pairs = clean.pairs();
    let rows: Vec<usize> = pairs.iter().map(|&(i, _)| i).collect();
    let target = Dual::constant(one_hot(&pairs, graph.n(), bundle.weight_shape.1));
    let inputs = GcnInputs {
        adj: graph.normalized(),
        propagated: graph.propagated_features(),
        dropout: None,
    };
    let params = [
        Dual::constant(bundle.params[0].value.clone()),
        Dual::constant(bundle.params[1].value.clone()),
    ];
    let out = grad_and_tangents(
        &inputs,
        &params,
        &LossSpec {
            target: &target,
            rows: &rows,
        },
    )?;
    Ok((out.loss, out.grads))
}

/// Mean cross-entropy of the current student on the clean nodes against
/// their pseudo-labels; `None` when the clean set is empty.
pub fn upper_loss(
    bundle: &TangentBundle,
    clean: &CleanNodeSet,
    graph: &Graph,
) -> Result<Option<f64>> {
    if clean.is_empty() {
        return Ok(None);
    }
    Ok(Some(upper_pieces(bundle, clean, graph)?.0))
}

/// Upper-loss gradient with respect to the teacher weights, contracting
/// `∂L_w/∂θ` with the accumulated tangents. The teacher weights do not
/// appear in the upper loss, so there is no direct term. Exactly zero for a
/// window with no steps or an empty clean set.
pub fn hypergradient(
    bundle: &TangentBundle,
    clean: &CleanNodeSet,
    graph: &Graph,
) -> Result<DenseMatrix> {
    let (k, c) = bundle.weight_shape;
    if bundle.steps == 0 || clean.is_empty() {
        return Ok(DenseMatrix::zeros(k, c));
    }
    if bundle.directions() != k * c {
        return Err(Error::Argument(
            "hypergradient needs a bundle that tracks tangents".into(),
        ));
    }
    let (_, [g0, g1]) = upper_pieces(bundle, clean, graph)?;
    let mut out = DenseMatrix::zeros(k, c);
    for (d, v) in out.data_mut().iter_mut().enumerate() {
        *v = g0.dot(&bundle.params[0].tangents[d])? + g1.dot(&bundle.params[1].tangents[d])?;
    }
    Ok(out)
}

/// Result of one upper update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpperStep {
    Applied,
    SkippedNonFinite,
}

/// `W <- W - lr * g`. A non-finite gradient leaves `W` untouched.
pub fn upper_step(w: &mut TeacherWeightMatrix, g: &DenseMatrix) -> Result<UpperStep> {
    if g.shape() != w.weights.shape() {
        return Err(Error::dim(
            "upper_step",
            format!("{:?} vs {:?}", g.shape(), w.weights.shape()),
        ));
    }
    if !g.is_finite() {
        log::warn!("non-finite hypergradient; skipping upper update");
        return Ok(UpperStep::SkippedNonFinite);
    }
    let lr = w.lr;
    w.weights.axpy(-lr, g)?;
    w.updates += 1;
    Ok(UpperStep::Applied)
}
