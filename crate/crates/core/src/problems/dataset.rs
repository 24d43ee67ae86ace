//! Sparse labelled samples in compressed-row form.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    row_ptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<f64>,
}

/// Borrowed view of one sample.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
    pub label: f64,
}

impl Row<'_> {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices.iter().zip(self.values).map(|(&i, v)| v * x[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `y[offset + i] += alpha * a_i`
    pub fn add_scaled(&self, alpha: f64, y: &mut [f64], offset: usize) {
        for (&i, v) in self.indices.iter().zip(self.values) {
            y[offset + i] += alpha * v;
        }
    }
}

impl Dataset {
    /// Build from per-row sorted `(index, value)` lists and `+-1` labels.
    pub fn from_rows(dim: usize, rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), actual: labels.len() });
        }
        if let Some(l) = labels.iter().find(|l| **l != 1.0 && **l != -1.0) {
            return Err(Error::InvalidProblem(format!("labels must be +1 or -1, got {l}")));
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            let mut prev = None;
            for (i, v) in row {
                if i >= dim {
                    return Err(Error::InvalidProblem(format!("feature index {i} out of range for d = {dim}")));
                }
                if prev.is_some_and(|p| p >= i) {
                    return Err(Error::InvalidProblem("row indices must be strictly increasing".into()));
                }
                prev = Some(i);
                indices.push(i);
                values.push(v);
            }
            row_ptr.push(indices.len());
        }
        Ok(Self { dim, row_ptr, indices, values, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Fraction of stored entries among `len * dim`.
    pub fn density(&self) -> f64 {
        if self.is_empty() || self.dim == 0 {
            return 0.0;
        }
        self.nnz() as f64 / (self.len() as f64 * self.dim as f64)
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row(&self, r: usize) -> Row<'_> {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        Row {
            indices: &self.indices[lo..hi],
            values: &self.values[lo..hi],
            label: self.labels[r],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        (0..self.len()).map(|r| self.row(r))
    }

    /// Copy with every feature multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }
}
