//! Teacher ensemble: frozen label-free encoders, each topped with a
//! single-layer softmax classifier trained on the current supervision.

mod encoders;

pub use encoders::{
    builtin_encoders, make_encoder, ContrastiveEncoder, EncoderKind, EncoderParams,
    PropagationEncoder, ReconstructionEncoder, TeacherEncoder,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{Graph, LabelState};
use crate::linalg::{linear_softmax_grad, matmul, row_softmax, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierParams {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.05,
        }
    }
}

/// Trains a zero-initialized bias-free linear classifier on the
/// supervising nodes among `nodes` by full-batch gradient descent.
pub fn train_classifier(
    embeddings: &DenseMatrix,
    labels: &LabelState,
    nodes: &[usize],
    params: &ClassifierParams,
) -> Result<DenseMatrix> {
    let c = labels.classes();
    let labelled: Vec<(usize, usize)> = nodes
        .iter()
        .filter_map(|&i| labels.label(i).map(|y| (i, y)))
        .collect();
    let mut seen = vec![false; c];
    for &(_, y) in &labelled {
        seen[y] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Validation(format!(
            "class {missing} has no supervising node for classifier training"
        )));
    }
    let mut w = DenseMatrix::zeros(embeddings.cols(), c);
    for _ in 0..params.epochs {
        let (_, g) = linear_softmax_grad(embeddings, &w, &labelled)?;
        w.axpy(-params.lr, &g)?;
    }
    if !w.is_finite() {
        return Err(Error::Numeric {
            stage: "teacher classifier",
        });
    }
    Ok(w)
}

/// Class probabilities of a linear classifier.
pub fn classifier_predict(embeddings: &DenseMatrix, weights: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(row_softmax(&matmul(embeddings, weights)?))
}

/// Frozen teacher outputs for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherEnsemble {
    embeddings: Vec<DenseMatrix>,
    classifiers: Vec<DenseMatrix>,
    probs: Vec<DenseMatrix>,
}

impl TeacherEnsemble {
    /// Assembles from per-teacher embeddings and classifier weights.
    pub fn from_parts(embeddings: Vec<DenseMatrix>, classifiers: Vec<DenseMatrix>) -> Result<Self> {
        if embeddings.is_empty() || embeddings.len() != classifiers.len() {
            return Err(Error::Argument(format!(
                "{} embeddings for {} classifiers",
                embeddings.len(),
                classifiers.len()
            )));
        }
        let n = embeddings[0].rows();
        let probs = embeddings
            .iter()
            .zip(&classifiers)
            .map(|(h, w)| {
                if h.rows() != n {
                    return Err(Error::dim("ensemble", "embedding row counts differ"));
                }
                classifier_predict(h, w)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_probs_with_embeddings(embeddings, classifiers, probs)
    }

    fn from_probs_with_embeddings(
        embeddings: Vec<DenseMatrix>,
        classifiers: Vec<DenseMatrix>,
        probs: Vec<DenseMatrix>,
    ) -> Result<Self> {
        let shape = probs[0].shape();
        if probs.iter().any(|p| p.shape() != shape) {
            return Err(Error::dim("ensemble", "probability shapes differ"));
        }
        Ok(Self {
            embeddings,
            classifiers,
            probs,
        })
    }

    /// An ensemble given directly by probability matrices (and optional
    /// embeddings); used for synthetic instances.
    pub fn from_probs(
        probs: Vec<DenseMatrix>,
        embeddings: Option<Vec<DenseMatrix>>,
    ) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Argument("empty ensemble".into()));
        }
        let embeddings = embeddings.unwrap_or_else(|| probs.clone());
        if embeddings.len() != probs.len() {
            return Err(Error::Argument(
                "embedding and probability counts differ".into(),
            ));
        }
        Self::from_probs_with_embeddings(embeddings, Vec::new(), probs)
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn n(&self) -> usize {
        self.probs[0].rows()
    }

    pub fn classes(&self) -> usize {
        self.probs[0].cols()
    }

    pub fn probs(&self) -> &[DenseMatrix] {
        &self.probs
    }

    pub fn embeddings(&self) -> &[DenseMatrix] {
        &self.embeddings
    }

    pub fn classifiers(&self) -> &[DenseMatrix] {
        &self.classifiers
    }

    /// Unnormalized sum of teacher probabilities.
    pub fn summed(&self) -> DenseMatrix {
        let mut s = self.probs[0].clone();
        for p in &self.probs[1..] {
            s.axpy(1.0, p).expect("shapes checked at construction");
        }
        s
    }

    /// Keeps only teacher `i`.
    pub fn single(&self, i: usize) -> Self {
        Self {
            embeddings: vec![self.embeddings[i].clone()],
            classifiers: self.classifiers.get(i).cloned().into_iter().collect(),
            probs: vec![self.probs[i].clone()],
        }
    }
}

/// Embeds with each fitted encoder and applies its classifier.
pub fn ensemble_predict(
    encoders: &[Box<dyn TeacherEncoder>],
    classifiers: &[DenseMatrix],
    graph: &Graph,
) -> Result<TeacherEnsemble> {
    let embeddings = encoders
        .iter()
        .map(|e| e.embed(graph))
        .collect::<Result<Vec<_>>>()?;
    TeacherEnsemble::from_parts(embeddings, classifiers.to_vec())
}

/// Fits each encoder on the graph and returns the frozen embeddings.
pub fn fit_encoders(
    encoders: &mut [Box<dyn TeacherEncoder>],
    graph: &Graph,
    seed: u64,
) -> Result<Vec<DenseMatrix>> {
    encoders
        .iter_mut()
        .map(|e| {
            e.fit(graph, seed)?;
            e.embed(graph)
        })
        .collect()
}

/// Trains one classifier per embedding on the current supervision.
pub fn train_classifiers(
    embeddings: &[DenseMatrix],
    labels: &LabelState,
    params: &ClassifierParams,
) -> Result<Vec<DenseMatrix>> {
    let nodes = labels.supervising_nodes();
    embeddings
        .iter()
        .map(|h| train_classifier(h, labels, &nodes, params))
        .collect()
}
