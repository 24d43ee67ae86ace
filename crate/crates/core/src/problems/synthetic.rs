//! Small planted classification problems for tests and experiments.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Loss, Problem};
use crate::error::{Error, Result};
use crate::rng::{Stream, Streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub samples_per_node: usize,
    pub dim: usize,
    /// Probability that a feature is present in a row.
    pub density: f64,
    /// Probability that a planted label is flipped.
    pub flip_prob: f64,
}

impl SyntheticSpec {
    pub fn new(nodes: usize, samples_per_node: usize, dim: usize) -> Self {
        Self { nodes, samples_per_node, dim, density: 0.2, flip_prob: 0.1 }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.samples_per_node == 0 || self.dim == 0 {
            return Err(Error::InvalidProblem("synthetic sizes must be positive".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidProblem(format!("density must lie in (0, 1], got {}", self.density)));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::InvalidProblem(format!("flip_prob must lie in [0, 1], got {}", self.flip_prob)));
        }
        Ok(())
    }

    /// `nodes * samples_per_node` rows of sparse Gaussian features, labelled
    /// by the sign of a planted linear rule with random flips. Every row has
    /// at least one feature.
    pub fn dataset(&self, seed: u64) -> Result<Dataset> {
        self.validate()?;
        let mut rng = Streams::new(seed).rng(Stream::Data, 0, 0);
        let w: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let total = self.nodes * self.samples_per_node;
        let mut rows = Vec::with_capacity(total);
        let mut labels = Vec::with_capacity(total);
        for _ in 0..total {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for k in 0..self.dim {
                if rng.random_bool(self.density) {
                    row.push((k, rng.sample(StandardNormal)));
                }
            }
            if row.is_empty() {
                let k = rng.random_range(0..self.dim);
                row.push((k, rng.sample(StandardNormal)));
            }
            let score: f64 = row.iter().map(|(k, v)| w[*k] * v).sum();
            let mut label = if score >= 0.0 { 1.0 } else { -1.0 };
            if rng.random_bool(self.flip_prob) {
                label = -label;
            }
            rows.push(row);
            labels.push(label);
        }
        Dataset::from_rows(self.dim, rows, labels)
    }

    pub fn problem(&self, loss: Loss, noise_sigma: f64, seed: u64) -> Result<Problem> {
        let data = self.dataset(seed)?;
        let mut rng = Streams::new(seed).rng(Stream::Data, 1, 0);
        Problem::split(data, self.nodes, loss, noise_sigma, &mut rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_reproducibility() {
        let spec = SyntheticSpec::new(3, 8, 10);
        let a = spec.dataset(5).unwrap();
        assert_eq!(a.len(), 24);
        assert_eq!(a.dim(), 10);
        assert_eq!(a, spec.dataset(5).unwrap());
        assert_ne!(a, spec.dataset(6).unwrap());
        let p = spec.problem(Loss::SquaredSigmoid, 0.0, 5).unwrap();
        assert_eq!((p.nodes(), p.samples_per_node()), (3, 8));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = SyntheticSpec::new(3, 8, 10);
        spec.density = 0.0;
        assert!(spec.dataset(0).is_err());
        assert!(SyntheticSpec::new(0, 8, 10).dataset(0).is_err());
    }
}
