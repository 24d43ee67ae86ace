//! Unbiased compression operators.
//!
//! A compressor `C` maps `x` to a random vector with `E[C(x)] = x` and
//! `E||C(x) - x||^2 <= omega * ||x||^2`. Messages are sparse
//! `(index, value)` lists so that communication can be counted in
//! transmitted coordinates.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompressorKind {
    Identity,
    RandK { k: usize },
}

/// A validated compressor over `R^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressorSpec {
    kind: CompressorKind,
    dim: usize,
}

/// Sparse vector stored as sorted `(index, value)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    pub dim: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn from_dense(x: &[f64]) -> Self {
        Self {
            dim: x.len(),
            indices: (0..x.len()).collect(),
            values: x.to_vec(),
        }
    }

    /// Number of stored (transmitted) coordinates.
    pub fn stored(&self) -> usize {
        self.indices.len()
    }

    pub fn nonzeros(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    /// `y += alpha * self`
    pub fn axpy_into(&self, alpha: f64, y: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            y[i] += alpha * v;
        }
    }
}

impl CompressorSpec {
    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCompressor("dimension must be positive".into()));
        }
        Ok(Self { kind: CompressorKind::Identity, dim })
    }

    pub fn rand_k(dim: usize, k: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCompressor("dimension must be positive".into()));
        }
        if k == 0 || k > dim {
            return Err(Error::InvalidCompressor(format!("RandK requires 1 <= K <= d, got K = {k}, d = {dim}")));
        }
        Ok(Self { kind: CompressorKind::RandK { k }, dim })
    }

    pub fn new(kind: CompressorKind, dim: usize) -> Result<Self> {
        match kind {
            CompressorKind::Identity => Self::identity(dim),
            CompressorKind::RandK { k } => Self::rand_k(dim, k),
        }
    }

    pub fn kind(&self) -> CompressorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Variance parameter: 0 for the identity, `d/K - 1` for RandK.
    pub fn omega(&self) -> f64 {
        match self.kind {
            CompressorKind::Identity => 0.0,
            CompressorKind::RandK { k } => self.dim as f64 / k as f64 - 1.0,
        }
    }

    /// Supremum over inputs of the expected number of transmitted coordinates.
    pub fn expected_density(&self) -> usize {
        match self.kind {
            CompressorKind::Identity => self.dim,
            CompressorKind::RandK { k } => k,
        }
    }

    /// Draw the random part of the compressor: the kept coordinate set for
    /// RandK (sorted), `None` for the deterministic identity.
    pub fn sample_support<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<usize>> {
        match self.kind {
            CompressorKind::Identity => None,
            CompressorKind::RandK { k } => {
                let mut idx = partial_fisher_yates(rng, self.dim, k);
                idx.sort_unstable();
                Some(idx)
            }
        }
    }

    /// Apply the compressor for a fixed draw of its randomness.
    pub fn apply(&self, x: &[f64], support: Option<&[usize]>) -> Result<SparseVec> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        match (self.kind, support) {
            (CompressorKind::Identity, _) => Ok(SparseVec::from_dense(x)),
            (CompressorKind::RandK { k }, Some(support)) => {
                if support.len() != k || support.iter().any(|&i| i >= self.dim) {
                    return Err(Error::InvalidCompressor(format!(
                        "support of size {} is not a valid RandK selection",
                        support.len()
                    )));
                }
                let scale = self.dim as f64 / k as f64;
                Ok(SparseVec {
                    dim: self.dim,
                    indices: support.to_vec(),
                    values: support.iter().map(|&i| scale * x[i]).collect(),
                })
            }
            (CompressorKind::RandK { .. }, None) => {
                Err(Error::InvalidCompressor("RandK needs a coordinate selection".into()))
            }
        }
    }

    pub fn compress<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<SparseVec> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        let support = self.sample_support(rng);
        self.apply(x, support.as_deref())
    }
}

/// First `k` entries of a uniformly shuffled `0..n`, touching only O(k)
/// slots of the virtual index array.
pub fn partial_fisher_yates<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut swapped: HashMap<usize, usize> = HashMap::with_capacity(2 * k);
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.random_range(i..n);
        let at_j = *swapped.get(&j).unwrap_or(&j);
        let at_i = *swapped.get(&i).unwrap_or(&i);
        swapped.insert(j, at_i);
        out.push(at_j);
    }
    out
}
