//! The partial-participation DASHA engine and its estimator variants.
//!
//! Every round the server moves `x <- x - gamma * g` and each participating
//! node `i` computes a variant-specific `k_i`, then
//!
//! ```text
//! h_i <- h_i + k_i / p_a
//! m_i  = C_i(k_i / p_a - (a / p_a) (g_i - h_i_old))
//! g_i <- g_i + m_i
//! ```
//!
//! while the server adds `(1/n) sum_i m_i` to `g`. Absent nodes send nothing
//! and keep their state.

mod engine;
pub mod reference;

use serde::{Deserialize, Serialize};

pub use engine::{draw_plan, run, Dasha, NodeBatch, OptimizerState, RoundPlan, RoundReport, RunRecord, RunRow};

use crate::error::{Error, Result};
use crate::linalg::axpy;
use crate::problems::{Problem, XiBatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Variant {
    /// Exact local gradients.
    Gradient,
    /// Shared coin: full-gradient recursion with probability `p_page`,
    /// otherwise a with-replacement minibatch difference of size `batch`.
    Page { p_page: f64, batch: usize },
    /// Per-sample momentum over a without-replacement subset of size `batch`.
    FiniteMvr { batch: usize },
    /// Stochastic momentum with `batch` shared draws per round.
    Mvr { batch: usize, init_batch: usize },
    /// Stochastic estimator with occasional uncompressed mega-batch rounds.
    SyncMvr { p_mega: f64, batch: usize, mega_batch: usize, init_batch: usize },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Gradient => "gradient",
            Variant::Page { .. } => "page",
            Variant::FiniteMvr { .. } => "finite-mvr",
            Variant::Mvr { .. } => "mvr",
            Variant::SyncMvr { .. } => "sync-mvr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub variant: Variant,
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must lie in (0, 1], got {v}")))
    }
}

impl VariantConfig {
    pub fn new(variant: Variant, gamma: f64, a: f64, b: f64) -> Result<Self> {
        let cfg = Self { variant, gamma, a, b };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("step size must be finite and nonnegative, got {}", self.gamma)));
        }
        unit_interval("a", self.a)?;
        unit_interval("b", self.b)?;
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::InvalidConfig(format!("{name} must be at least 1")))
            } else {
                Ok(())
            }
        };
        match self.variant {
            Variant::Gradient => {}
            Variant::Page { p_page, batch } => {
                unit_interval("p_page", p_page)?;
                positive("batch", batch)?;
            }
            Variant::FiniteMvr { batch } => positive("batch", batch)?,
            Variant::Mvr { batch, init_batch } => {
                positive("batch", batch)?;
                positive("init_batch", init_batch)?;
            }
            Variant::SyncMvr { p_mega, batch, mega_batch, init_batch } => {
                unit_interval("p_mega", p_mega)?;
                positive("batch", batch)?;
                positive("init_batch", init_batch)?;
                if mega_batch < batch {
                    return Err(Error::InvalidConfig(format!(
                        "mega batch {mega_batch} must be at least the batch {batch}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `grad f_i(x_new) - grad f_i(x_old) - b (h_i - grad f_i(x_old))`.
pub fn compute_k_gradient(problem: &Problem, node: usize, x_new: &[f64], x_old: &[f64], h_i: &[f64], b: f64) -> Result<Vec<f64>> {
    let g_new = problem.grad_full(node, x_new)?;
    let g_old = problem.grad_full(node, x_old)?;
    Ok(momentum_difference(&g_new, &g_old, h_i, b))
}

/// Branch of the PAGE estimator for a realized coin. `batch` holds the
/// with-replacement indices used when `heads` is false.
#[allow(clippy::too_many_arguments)]
pub fn compute_k_page(
    problem: &Problem,
    node: usize,
    x_new: &[f64],
    x_old: &[f64],
    h_i: &[f64],
    b: f64,
    p_page: f64,
    heads: bool,
    batch: &[usize],
) -> Result<Vec<f64>> {
    if heads {
        let g_new = problem.grad_full(node, x_new)?;
        let g_old = problem.grad_full(node, x_old)?;
        Ok(momentum_difference(&g_new, &g_old, h_i, b / p_page))
    } else {
        let g_new = problem.grad_minibatch(node, batch, x_new)?;
        let g_old = problem.grad_minibatch(node, batch, x_old)?;
        Ok(momentum_difference(&g_new, &g_old, h_i, 0.0))
    }
}

/// Per-sample estimator over the without-replacement subset `subset`.
/// Updates `h_rows[j]` for `j` in the subset and returns `k_i`.
#[allow(clippy::too_many_arguments)]
pub fn compute_k_finite_mvr(
    problem: &Problem,
    node: usize,
    x_new: &[f64],
    x_old: &[f64],
    h_rows: &mut [Vec<f64>],
    b: f64,
    p_a: f64,
    subset: &[usize],
) -> Result<Vec<f64>> {
    let m = problem.samples_per_node();
    let batch = subset.len();
    if batch == 0 || batch > m {
        return Err(Error::InvalidConfig(format!("finite-sum batch must lie in 1..={m}, got {batch}")));
    }
    if h_rows.len() != m {
        return Err(Error::DimensionMismatch { expected: m, actual: h_rows.len() });
    }
    let scale = m as f64 / batch as f64;
    let mut k = vec![0.0; problem.dim()];
    for &j in subset {
        let g_new = problem.grad_sample(node, j, x_new)?;
        let g_old = problem.grad_sample(node, j, x_old)?;
        let mut k_ij = momentum_difference(&g_new, &g_old, &h_rows[j], b);
        k_ij.iter_mut().for_each(|v| *v *= scale);
        axpy(1.0 / p_a, &k_ij, &mut h_rows[j]);
        axpy(1.0 / m as f64, &k_ij, &mut k);
    }
    Ok(k)
}

/// Stochastic momentum estimator; the same draws `xi` are evaluated at both
/// points.
pub fn compute_k_mvr(problem: &Problem, node: usize, x_new: &[f64], x_old: &[f64], h_i: &[f64], b: f64, xi: &XiBatch) -> Result<Vec<f64>> {
    let g_new = problem.grad_xi(node, xi, x_new)?;
    let g_old = problem.grad_xi(node, xi, x_old)?;
    Ok(momentum_difference(&g_new, &g_old, h_i, b))
}

/// SYNC-MVR estimator for a realized coin: a mega-batch recursion with
/// momentum `b / p_mega` when `mega` is set, otherwise a plain minibatch
/// difference.
#[allow(clippy::too_many_arguments)]
pub fn compute_k_sync_mvr(
    problem: &Problem,
    node: usize,
    x_new: &[f64],
    x_old: &[f64],
    h_i: &[f64],
    b: f64,
    p_mega: f64,
    mega: bool,
    xi: &XiBatch,
) -> Result<Vec<f64>> {
    let momentum = if mega { b / p_mega } else { 0.0 };
    compute_k_mvr(problem, node, x_new, x_old, h_i, momentum, xi)
}

/// `g_new - g_old - b (h - g_old)`, the shared shape of every estimator.
fn momentum_difference(g_new: &[f64], g_old: &[f64], h: &[f64], b: f64) -> Vec<f64> {
    g_new
        .iter()
        .zip(g_old)
        .zip(h)
        .map(|((gn, go), hv)| if b == 0.0 { gn - go } else { gn - go - b * (hv - go) })
        .collect()
}
