use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// A matrix value carried together with its directional derivatives.
///
/// `tangents[d]` is the derivative of `value` along upper-level direction
/// `d`. An empty tangent list stands for "all directions are zero", which
/// lets constants participate in tangent computations without allocating.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub value: DenseMatrix,
    pub tangents: Vec<DenseMatrix>,
}

impl Dual {
    pub fn constant(value: DenseMatrix) -> Self {
        Self {
            value,
            tangents: Vec::new(),
        }
    }

    /// A value with `directions` zero tangents.
    pub fn with_zero_tangents(value: DenseMatrix, directions: usize) -> Self {
        let (r, c) = value.shape();
        Self {
            tangents: vec![DenseMatrix::zeros(r, c); directions],
            value,
        }
    }

    pub fn new(value: DenseMatrix, tangents: Vec<DenseMatrix>) -> Result<Self> {
        if let Some(t) = tangents.iter().find(|t| t.shape() != value.shape()) {
            return Err(Error::dim(
                "dual",
                format!("tangent {:?} vs value {:?}", t.shape(), value.shape()),
            ));
        }
        Ok(Self { value, tangents })
    }

    pub fn directions(&self) -> usize {
        self.tangents.len()
    }

    /// Tangent for direction `d`, or `None` when this dual is a constant.
    pub fn tangent(&self, d: usize) -> Option<&DenseMatrix> {
        self.tangents.get(d)
    }

    pub fn reset_tangents(&mut self) {
        for t in &mut self.tangents {
            t.data_mut().fill(0.0);
        }
    }
}
