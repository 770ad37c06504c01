use crate::error::{Error, Result};
use crate::linalg::{spmm, DenseMatrix, SparseAdjacency};

/// An attributed undirected graph with its normalized adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    features: DenseMatrix,
    adjacency: SparseAdjacency,
    normalized: SparseAdjacency,
    propagated: DenseMatrix,
}

impl Graph {
    /// `adjacency` must be symmetric without stored self-loops.
    pub fn new(features: DenseMatrix, adjacency: SparseAdjacency) -> Result<Self> {
        if features.rows() != adjacency.n() {
            return Err(Error::dim(
                "graph",
                format!(
                    "{} feature rows for {} nodes",
                    features.rows(),
                    adjacency.n()
                ),
            ));
        }
        if !features.is_finite() {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        let normalized = normalize_adjacency(&adjacency)?;
        let propagated = spmm(&normalized, &features)?;
        Ok(Self {
            features,
            adjacency,
            normalized,
            propagated,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn adjacency(&self) -> &SparseAdjacency {
        &self.adjacency
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}`.
    pub fn normalized(&self) -> &SparseAdjacency {
        &self.normalized
    }

    /// `Â X`, cached because the first student layer always needs it.
    pub fn propagated_features(&self) -> &DenseMatrix {
        &self.propagated
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.nnz() / 2
    }
}

/// Symmetric renormalization with self-loops: `D̃^{-1/2} (A + I) D̃^{-1/2}`
/// where `D̃` is the (weighted) degree matrix of `A + I`.
pub fn normalize_adjacency(adj: &SparseAdjacency) -> Result<SparseAdjacency> {
    adj.validate()?;
    if adj.has_self_loops() {
        return Err(Error::Validation(
            "adjacency must not store self-loops before normalization".into(),
        ));
    }
    let n = adj.n();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|r| {
            let (_, vals) = adj.row(r);
            let deg = 1.0 + vals.iter().sum::<f64>();
            1.0 / deg.sqrt()
        })
        .collect();
    let mut triplets = Vec::with_capacity(adj.nnz() + n);
    for r in 0..n {
        triplets.push((r, r, inv_sqrt[r] * inv_sqrt[r]));
        let (cols, vals) = adj.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            // same operand order for (r, c) and (c, r) keeps the result exactly symmetric
            let (lo, hi) = (r.min(c), r.max(c));
            triplets.push((r, c, v * (inv_sqrt[lo] * inv_sqrt[hi])));
        }
    }
    SparseAdjacency::from_triplets(n, &triplets)
}
