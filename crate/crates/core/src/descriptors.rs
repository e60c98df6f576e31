//! Dense per-point descriptor storage.

use crate::error::{Result, SgpError};

/// Row-major descriptor matrix with a per-row validity mask.
///
/// Rows marked invalid (for example the all-zero FPFH of an isolated point)
/// never take part in matching, neither as query nor as candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl DescriptorSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(SgpError::invalid("descriptor dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(SgpError::invalid(format!(
                "descriptor buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SgpError::invalid("descriptor values must be finite"));
        }
        let n = data.len() / dim;
        Ok(Self {
            dim,
            data,
            valid: vec![true; n],
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| SgpError::invalid("descriptor list is empty"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(SgpError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    /// Marks every all-zero row invalid.
    pub fn with_zero_rows_excluded(mut self) -> Self {
        for i in 0..self.len() {
            if self.row(i).iter().all(|&v| v == 0.0) {
                self.valid[i] = false;
            }
        }
        self
    }

    pub fn with_mask(mut self, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != self.len() {
            return Err(SgpError::DimensionMismatch {
                expected: self.len(),
                found: valid.len(),
            });
        }
        self.valid = valid;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Squared Euclidean distance, summed in index order.
///
/// Every matching path uses this one function so that tree search and
/// brute force agree bit for bit.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_rows() {
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(
            DescriptorSet::from_rows(&rows),
            Err(SgpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_rows_are_masked() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        let set = DescriptorSet::from_rows(&rows).unwrap().with_zero_rows_excluded();
        assert!(!set.is_valid(0));
        assert!(set.is_valid(1));
        assert_eq!(set.valid_count(), 1);
    }
}
