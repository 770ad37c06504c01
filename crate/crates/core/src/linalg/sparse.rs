use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Square sparse matrix in compressed-row layout.
///
/// Column indices are strictly increasing within a row. Symmetry is checked
/// by [`SparseAdjacency::from_triplets`] and [`SparseAdjacency::validate`]; the
/// graph constructors only ever build symmetric instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseAdjacency {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseAdjacency {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are
    /// merged by keeping the last value. The result must be symmetric.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(Error::Validation(format!(
                    "entry ({r}, {c}) out of range for n = {n}"
                )));
            }
            sorted.push((r, c, v));
        }
        // stable: the last duplicate wins below
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0usize; n + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") = v;
                continue;
            }
            last = Some((r, c));
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        let adj = Self {
            n,
            row_offsets,
            col_indices,
            values,
        };
        adj.validate()?;
        Ok(adj)
    }

    /// Checks index ranges, ordering, and symmetry.
    pub fn validate(&self) -> Result<()> {
        if self.row_offsets.len() != self.n + 1 {
            return Err(Error::Validation("row offset length".into()));
        }
        for r in 0..self.n {
            let (cols, _) = self.row(r);
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Validation(format!(
                        "row {r}: column indices not strictly increasing"
                    )));
                }
            }
            if let Some(&c) = cols.last() {
                if c >= self.n {
                    return Err(Error::Validation(format!("row {r}: column {c} >= n")));
                }
            }
        }
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                match self.get(c, r) {
                    Some(u) if u == v => {}
                    _ => return Err(Error::Validation(format!("asymmetric entry ({r}, {c})"))),
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).ok().map(|i| vals[i])
    }

    pub fn degree(&self, r: usize) -> usize {
        self.row_offsets[r + 1] - self.row_offsets[r]
    }

    /// Iterates stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.n).any(|r| self.get(r, r).is_some())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }
}

/// Sparse-dense product `adj * m`. Per output row, stored entries are
/// accumulated in increasing column order.
pub fn spmm(adj: &SparseAdjacency, m: &DenseMatrix) -> Result<DenseMatrix> {
    if adj.n != m.rows() {
        return Err(Error::dim(
            "spmm",
            format!("adjacency n = {} vs {:?}", adj.n, m.shape()),
        ));
    }
    let mut out = DenseMatrix::zeros(adj.n, m.cols());
    for r in 0..adj.n {
        let (cols, vals) = adj.row(r);
        let orow = out.row_mut(r);
        for (&c, &v) in cols.iter().zip(vals) {
            for (o, &x) in orow.iter_mut().zip(m.row(c)) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}
