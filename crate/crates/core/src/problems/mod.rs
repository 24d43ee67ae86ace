//! Distributed objectives `f(x) = (1/n) sum_i f_i(x)` with
//! `f_i(x) = (1/m) sum_j f_ij(x)` over equally sized node shards.

pub mod dataset;
pub mod libsvm;
pub mod losses;
pub mod synthetic;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, Row};
pub use losses::Loss;

use crate::error::{Error, Result};
use losses::{nonconvex_reg, squared_sigmoid, two_class_cross_entropy, SQUARED_SIGMOID_CURVATURE, SQUARED_SIGMOID_SLOPE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeShard {
    pub node_id: usize,
    pub sample_indices: Vec<usize>,
}

impl NodeShard {
    pub fn m(&self) -> usize {
        self.sample_indices.len()
    }
}

/// Shuffle sample indices and cut the permutation into `n` shards of
/// `floor(N / n)` samples; the remainder is dropped.
pub fn split_equal<R: Rng + ?Sized>(dataset: &Dataset, n: usize, rng: &mut R) -> Result<Vec<NodeShard>> {
    let total = dataset.len();
    if n == 0 || total < n {
        return Err(Error::NotEnoughSamples { samples: total, nodes: n });
    }
    let m = total / n;
    let mut perm: Vec<usize> = (0..total).collect();
    perm.shuffle(rng);
    Ok(perm
        .chunks_exact(m)
        .take(n)
        .enumerate()
        .map(|(node_id, c)| NodeShard { node_id, sample_indices: c.to_vec() })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessEstimates {
    pub l: f64,
    pub l_hat: f64,
    pub l_max: f64,
    pub l_sigma: f64,
    pub mu: Option<f64>,
}

/// A realization of `B` stochastic draws `xi`: sample indices (with
/// replacement) and the average of their additive Gaussian noise vectors.
/// Evaluating the same batch at two points reuses both parts.
#[derive(Debug, Clone, PartialEq)]
pub struct XiBatch {
    pub samples: Vec<usize>,
    pub noise: Option<Vec<f64>>,
}

impl XiBatch {
    /// Every local sample exactly once and no noise.
    pub fn exhaustive(m: usize) -> Self {
        Self { samples: (0..m).collect(), noise: None }
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    loss: Loss,
    dataset: Dataset,
    shards: Vec<NodeShard>,
    noise_sigma: f64,
}

impl Problem {
    pub fn new(dataset: Dataset, shards: Vec<NodeShard>, loss: Loss, noise_sigma: f64) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::InvalidProblem("at least one node is required".into()));
        }
        let m = shards[0].m();
        if m == 0 {
            return Err(Error::InvalidProblem("shards must hold at least one sample".into()));
        }
        let mut used = vec![false; dataset.len()];
        for (i, s) in shards.iter().enumerate() {
            if s.m() != m {
                return Err(Error::InvalidProblem(format!("shard {i} has {} samples, expected {m}", s.m())));
            }
            for &j in &s.sample_indices {
                if j >= dataset.len() {
                    return Err(Error::SampleOutOfRange { sample: j, samples: dataset.len() });
                }
                if std::mem::replace(&mut used[j], true) {
                    return Err(Error::InvalidProblem(format!("sample {j} assigned to more than one shard")));
                }
            }
        }
        if let Loss::SoftmaxNonconvexReg { lambda } = loss {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(Error::InvalidProblem(format!("lambda must be a finite nonnegative number, got {lambda}")));
            }
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::InvalidProblem(format!("noise_sigma must be finite and nonnegative, got {noise_sigma}")));
        }
        Ok(Self { loss, dataset, shards, noise_sigma })
    }

    /// Random equal split of `dataset` across `n` nodes.
    pub fn split<R: Rng + ?Sized>(dataset: Dataset, n: usize, loss: Loss, noise_sigma: f64, rng: &mut R) -> Result<Self> {
        let shards = split_equal(&dataset, n, rng)?;
        Self::new(dataset, shards, loss, noise_sigma)
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn shards(&self) -> &[NodeShard] {
        &self.shards
    }

    pub fn nodes(&self) -> usize {
        self.shards.len()
    }

    pub fn samples_per_node(&self) -> usize {
        self.shards[0].m()
    }

    /// Dimension of the optimization variable.
    pub fn dim(&self) -> usize {
        self.loss.param_dim(self.dataset.dim())
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    fn check(&self, node: usize, x: &[f64]) -> Result<()> {
        if node >= self.nodes() {
            return Err(Error::NodeOutOfRange { node, nodes: self.nodes() });
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: x.len() });
        }
        Ok(())
    }

    fn check_sample(&self, j: usize) -> Result<()> {
        let m = self.samples_per_node();
        if j >= m {
            return Err(Error::SampleOutOfRange { sample: j, samples: m });
        }
        Ok(())
    }

    fn row(&self, node: usize, j: usize) -> Row<'_> {
        self.dataset.row(self.shards[node].sample_indices[j])
    }

    fn sample_value(&self, node: usize, j: usize, x: &[f64]) -> f64 {
        self.data_value(node, j, x) + self.reg_value(x)
    }

    fn data_value(&self, node: usize, j: usize, x: &[f64]) -> f64 {
        let row = self.row(node, j);
        match self.loss {
            Loss::SquaredSigmoid => squared_sigmoid(row.label * row.dot(x)).0,
            Loss::SoftmaxNonconvexReg { .. } => softmax_parts(&row, x, self.dataset.dim()).0,
        }
    }

    fn reg_value(&self, x: &[f64]) -> f64 {
        match self.loss {
            Loss::SoftmaxNonconvexReg { lambda } if lambda != 0.0 => {
                lambda * x.iter().map(|&u| nonconvex_reg(u).0).sum::<f64>()
            }
            _ => 0.0,
        }
    }

    /// Data part of `alpha * grad f_ij(x)` added into `out`; the softmax
    /// regularizer is handled by the callers.
    fn add_data_grad(&self, node: usize, j: usize, x: &[f64], alpha: f64, out: &mut [f64]) {
        let row = self.row(node, j);
        match self.loss {
            Loss::SquaredSigmoid => {
                let (_, d1) = squared_sigmoid(row.label * row.dot(x));
                row.add_scaled(alpha * d1 * row.label, out, 0);
            }
            Loss::SoftmaxNonconvexReg { .. } => {
                let d = self.dataset.dim();
                let (_, r) = softmax_parts(&row, x, d);
                row.add_scaled(alpha * r[0], out, 0);
                row.add_scaled(alpha * r[1], out, d);
            }
        }
    }

    fn add_reg_grad(&self, x: &[f64], out: &mut [f64]) {
        if let Loss::SoftmaxNonconvexReg { lambda } = self.loss {
            if lambda != 0.0 {
                for (o, &u) in out.iter_mut().zip(x) {
                    *o += lambda * nonconvex_reg(u).1;
                }
            }
        }
    }

    pub fn value_sample(&self, node: usize, j: usize, x: &[f64]) -> Result<f64> {
        self.check(node, x)?;
        self.check_sample(j)?;
        Ok(self.sample_value(node, j, x))
    }

    pub fn value_node(&self, node: usize, x: &[f64]) -> Result<f64> {
        self.check(node, x)?;
        let m = self.samples_per_node();
        Ok((0..m).map(|j| self.data_value(node, j, x)).sum::<f64>() / m as f64 + self.reg_value(x))
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: x.len() });
        }
        let (n, m) = (self.nodes(), self.samples_per_node());
        let mut total = 0.0;
        for i in 0..n {
            total += (0..m).map(|j| self.data_value(i, j, x)).sum::<f64>() / m as f64;
        }
        Ok(total / n as f64 + self.reg_value(x))
    }

    /// Exact `grad f_ij(x)`.
    pub fn grad_sample(&self, node: usize, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check(node, x)?;
        self.check_sample(j)?;
        let mut out = vec![0.0; self.dim()];
        self.add_data_grad(node, j, x, 1.0, &mut out);
        self.add_reg_grad(x, &mut out);
        Ok(out)
    }

    /// Exact `grad f_i(x)`.
    pub fn grad_full(&self, node: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check(node, x)?;
        let m = self.samples_per_node();
        let mut out = vec![0.0; self.dim()];
        let w = 1.0 / m as f64;
        for j in 0..m {
            self.add_data_grad(node, j, x, w, &mut out);
        }
        self.add_reg_grad(x, &mut out);
        Ok(out)
    }

    /// Exact `grad f(x)`.
    pub fn full_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.nodes();
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: x.len() });
        }
        let mut out = vec![0.0; self.dim()];
        let w = 1.0 / (n * self.samples_per_node()) as f64;
        for i in 0..n {
            for j in 0..self.samples_per_node() {
                self.add_data_grad(i, j, x, w, &mut out);
            }
        }
        self.add_reg_grad(x, &mut out);
        Ok(out)
    }

    /// Mean of `grad f_ij(x)` over a list of sample indices (repeats allowed).
    pub fn grad_minibatch(&self, node: usize, samples: &[usize], x: &[f64]) -> Result<Vec<f64>> {
        self.check(node, x)?;
        if samples.is_empty() {
            return Err(Error::InvalidConfig("batch must be nonempty".into()));
        }
        let mut out = vec![0.0; self.dim()];
        let w = 1.0 / samples.len() as f64;
        for &j in samples {
            self.check_sample(j)?;
            self.add_data_grad(node, j, x, w, &mut out);
        }
        self.add_reg_grad(x, &mut out);
        Ok(out)
    }

    /// Draw `batch` i.i.d. stochastic samples: a uniform local index plus an
    /// isotropic Gaussian vector with total variance `noise_sigma^2`.
    pub fn draw_xi<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> XiBatch {
        let m = self.samples_per_node();
        let samples: Vec<usize> = (0..batch).map(|_| rng.random_range(0..m)).collect();
        let noise = (self.noise_sigma > 0.0).then(|| {
            let dim = self.dim();
            let normal = Normal::new(0.0, self.noise_sigma / (dim as f64).sqrt()).expect("finite std");
            let mut acc = vec![0.0; dim];
            for _ in 0..batch {
                for a in acc.iter_mut() {
                    *a += normal.sample(rng);
                }
            }
            let w = 1.0 / batch as f64;
            acc.iter_mut().for_each(|a| *a *= w);
            acc
        });
        XiBatch { samples, noise }
    }

    /// `(1/B) sum_b grad f_i(x; xi_b)` for a fixed batch of draws.
    pub fn grad_xi(&self, node: usize, xi: &XiBatch, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.grad_minibatch(node, &xi.samples, x)?;
        if let Some(noise) = &xi.noise {
            crate::linalg::axpy(1.0, noise, &mut out);
        }
        Ok(out)
    }

    pub fn grad_stochastic<R: Rng + ?Sized>(&self, node: usize, x: &[f64], batch: usize, rng: &mut R) -> Result<Vec<f64>> {
        if batch == 0 {
            return Err(Error::InvalidConfig("batch must be at least 1".into()));
        }
        let xi = self.draw_xi(batch, rng);
        self.grad_xi(node, &xi, x)
    }

    /// Upper bound on `E_xi ||grad f_i(x; xi) - grad f_i(x)||^2` valid for
    /// every `x` and node.
    pub fn sigma_sq(&self) -> f64 {
        let per_node_mean_norm = (0..self.nodes())
            .map(|i| {
                let m = self.samples_per_node();
                (0..m).map(|j| self.row(i, j).norm_sq()).sum::<f64>() / m as f64
            })
            .fold(0.0, f64::max);
        let slope_sq = match self.loss {
            Loss::SquaredSigmoid => SQUARED_SIGMOID_SLOPE * SQUARED_SIGMOID_SLOPE,
            Loss::SoftmaxNonconvexReg { .. } => 2.0,
        };
        self.noise_sigma * self.noise_sigma + slope_sq * per_node_mean_norm
    }

    /// Per-sample smoothness bounds `L_ij`, indexed `[node][j]`.
    pub fn sample_smoothness(&self) -> Vec<Vec<f64>> {
        let (c, shift) = self.curvature();
        (0..self.nodes())
            .map(|i| (0..self.samples_per_node()).map(|j| c * self.row(i, j).norm_sq() + shift).collect())
            .collect()
    }

    /// `(c, s)` with `||hess f_ij|| <= c ||a_ij||^2 + s`.
    fn curvature(&self) -> (f64, f64) {
        match self.loss {
            Loss::SquaredSigmoid => (SQUARED_SIGMOID_CURVATURE, 0.0),
            Loss::SoftmaxNonconvexReg { lambda } => (0.5, 2.0 * lambda),
        }
    }

    pub fn estimate_smoothness(&self) -> SmoothnessEstimates {
        let lij = self.sample_smoothness();
        let l_max = lij.iter().flatten().copied().fold(0.0, f64::max);
        let l_i: Vec<f64> = lij.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
        let l_hat = (l_i.iter().map(|l| l * l).sum::<f64>() / l_i.len() as f64).sqrt();
        let (c, shift) = self.curvature();
        let l_global = c * self.mean_outer_product_norm() + shift;
        SmoothnessEstimates {
            l: l_global.min(l_hat),
            l_hat,
            l_max,
            l_sigma: l_max,
            mu: None,
        }
    }

    /// Largest eigenvalue of `(1/(n m)) sum_ij a_ij a_ij^T` by power iteration.
    fn mean_outer_product_norm(&self) -> f64 {
        let d = self.dataset.dim();
        let rows: Vec<Row<'_>> = (0..self.nodes())
            .flat_map(|i| (0..self.samples_per_node()).map(move |j| (i, j)))
            .map(|(i, j)| self.row(i, j))
            .collect();
        let total = rows.len() as f64;
        let mut v: Vec<f64> = (0..d).map(|k| 1.0 + 1e-3 * (k % 7) as f64).collect();
        let mut rho = 0.0;
        for _ in 0..5000 {
            let norm = crate::linalg::norm_sq(&v).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let mut w = vec![0.0; d];
            for r in &rows {
                r.add_scaled(r.dot(&v) / total, &mut w, 0);
            }
            let next = crate::linalg::dot(&v, &w);
            v = w;
            if (next - rho).abs() <= 1e-13 * next.abs() {
                rho = next;
                break;
            }
            rho = next;
        }
        rho
    }
}

fn softmax_parts(row: &Row<'_>, x: &[f64], d: usize) -> (f64, [f64; 2]) {
    let z0 = row.dot(&x[..d]);
    let z1 = row.dot(&x[d..]);
    let class = usize::from(row.label > 0.0);
    two_class_cross_entropy(z0, z1, class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn toy(loss: Loss) -> Problem {
        let data = Dataset::from_rows(
            3,
            vec![
                vec![(0, 1.0), (2, -0.5)],
                vec![(1, 2.0)],
                vec![(0, -1.5), (1, 0.5), (2, 1.0)],
                vec![(2, 0.25)],
            ],
            vec![1.0, -1.0, 1.0, -1.0],
        )
        .unwrap();
        Problem::split(data, 2, loss, 0.0, &mut seeded(0)).unwrap()
    }

    #[test]
    fn split_sizes() {
        let rows = |k| (0..k).map(|_| vec![(0, 1.0)]).collect::<Vec<_>>();
        let data = Dataset::from_rows(1, rows(10), vec![1.0; 10]).unwrap();
        let shards = split_equal(&data, 2, &mut seeded(1)).unwrap();
        let mut all: Vec<usize> = shards.iter().flat_map(|s| s.sample_indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        let data = Dataset::from_rows(1, rows(11), vec![1.0; 11]).unwrap();
        let shards = split_equal(&data, 2, &mut seeded(1)).unwrap();
        assert!(shards.iter().all(|s| s.m() == 5));

        let data = Dataset::from_rows(1, rows(3), vec![1.0; 3]).unwrap();
        assert!(matches!(split_equal(&data, 5, &mut seeded(1)), Err(Error::NotEnoughSamples { .. })));
    }

    #[test]
    fn squared_sigmoid_gradient_at_origin() {
        let p = toy(Loss::SquaredSigmoid);
        let x = vec![0.0; 3];
        for i in 0..2 {
            for j in 0..2 {
                let row = p.row(i, j);
                let mut expect = vec![0.0; 3];
                row.add_scaled(0.25 * row.label, &mut expect, 0);
                assert_eq!(p.grad_sample(i, j, &x).unwrap(), expect);
            }
        }
    }

    #[test]
    fn full_gradient_is_mean_of_samples() {
        for loss in [Loss::SquaredSigmoid, Loss::SoftmaxNonconvexReg { lambda: 0.01 }] {
            let p = toy(loss);
            let x: Vec<f64> = (0..p.dim()).map(|k| 0.3 * k as f64 - 0.4).collect();
            for i in 0..2 {
                let full = p.grad_full(i, &x).unwrap();
                let a = p.grad_sample(i, 0, &x).unwrap();
                let b = p.grad_sample(i, 1, &x).unwrap();
                for k in 0..p.dim() {
                    assert!((full[k] - 0.5 * (a[k] + b[k])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn errors_on_bad_indices() {
        let p = toy(Loss::SquaredSigmoid);
        assert!(matches!(p.grad_full(2, &[0.0; 3]), Err(Error::NodeOutOfRange { .. })));
        assert!(matches!(p.grad_sample(0, 2, &[0.0; 3]), Err(Error::SampleOutOfRange { .. })));
        assert!(matches!(p.grad_full(0, &[0.0; 2]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn exhaustive_batch_without_noise_is_exact() {
        let p = toy(Loss::SoftmaxNonconvexReg { lambda: 0.001 });
        let x = vec![0.2; p.dim()];
        let g = p.grad_xi(1, &XiBatch::exhaustive(2), &x).unwrap();
        let full = p.grad_full(1, &x).unwrap();
        assert!(crate::linalg::max_abs_diff(&g, &full) < 1e-15);
    }

    #[test]
    fn smoothness_ordering_and_scaling() {
        let p = toy(Loss::SquaredSigmoid);
        let s = p.estimate_smoothness();
        assert!(s.l <= s.l_hat && s.l_hat <= s.l_max);
        let scaled = Problem::new(p.dataset().scaled(2.0), p.shards().to_vec(), Loss::SquaredSigmoid, 0.0).unwrap();
        let a = p.sample_smoothness();
        let b = scaled.sample_smoothness();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((4.0 * x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_unit_sample_has_curvature_constant() {
        let data = Dataset::from_rows(2, vec![vec![(0, 0.6), (1, 0.8)]], vec![1.0]).unwrap();
        let p = Problem::split(data, 1, Loss::SquaredSigmoid, 0.0, &mut seeded(0)).unwrap();
        let s = p.estimate_smoothness();
        assert!((s.l_max - SQUARED_SIGMOID_CURVATURE).abs() < 1e-15);
        assert!((s.l - SQUARED_SIGMOID_CURVATURE).abs() < 1e-12);
    }
}
