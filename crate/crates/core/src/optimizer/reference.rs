//! Full-participation DASHA written in its native form, where each node
//! forms the new estimator `h_i^{t+1}` directly and compresses
//! `h_i^{t+1} - h_i^t - a (g_i^t - h_i^t)`.
//!
//! It consumes the same round plans as [`super::Dasha`], so with `p_a = 1`
//! both produce the same iterates up to floating-point rounding.

use rand::Rng;

use super::{draw_plan, NodeBatch, Variant, VariantConfig};
use crate::compressors::{CompressorSpec, SparseVec};
use crate::error::{Error, Result};
use crate::participation::ParticipationScheme;
use crate::problems::Problem;
use crate::rng::{Stream, Streams};

pub struct ReferenceDasha<'a> {
    problem: &'a Problem,
    compressors: Vec<CompressorSpec>,
    scheme: ParticipationScheme,
    config: VariantConfig,
    streams: Streams,
    pub x: Vec<f64>,
    pub g: Vec<f64>,
    pub g_nodes: Vec<Vec<f64>>,
    pub h_nodes: Vec<Vec<f64>>,
    h_samples: Vec<Vec<Vec<f64>>>,
    round: usize,
}

fn combine(a: &[f64], alpha: f64, b: &[f64], c: &[f64]) -> Vec<f64> {
    // a + alpha * (b - c)
    a.iter().zip(b).zip(c).map(|((x, y), z)| x + alpha * (y - z)).collect()
}

impl<'a> ReferenceDasha<'a> {
    pub fn new(problem: &'a Problem, compressors: Vec<CompressorSpec>, config: VariantConfig, x0: Vec<f64>, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = problem.nodes();
        if compressors.len() != n {
            return Err(Error::InvalidConfig(format!("{} compressors for {n} nodes", compressors.len())));
        }
        let streams = Streams::new(seed);
        let mut h_nodes = Vec::with_capacity(n);
        let mut h_samples = Vec::with_capacity(n);
        for i in 0..n {
            let mut rows = Vec::new();
            let h = match config.variant {
                Variant::Gradient | Variant::Page { .. } => problem.grad_full(i, &x0)?,
                Variant::FiniteMvr { .. } => {
                    let m = problem.samples_per_node();
                    let mut acc = vec![0.0; problem.dim()];
                    for j in 0..m {
                        let gij = problem.grad_sample(i, j, &x0)?;
                        acc.iter_mut().zip(&gij).for_each(|(a, v)| *a += v / m as f64);
                        rows.push(gij);
                    }
                    acc
                }
                Variant::Mvr { init_batch, .. } | Variant::SyncMvr { init_batch, .. } => {
                    let xi = problem.draw_xi(init_batch, &mut streams.rng(Stream::Init, 0, i as u64));
                    problem.grad_xi(i, &xi, &x0)?
                }
            };
            h_nodes.push(h);
            h_samples.push(rows);
        }
        let mut g = vec![0.0; problem.dim()];
        for h in &h_nodes {
            g.iter_mut().zip(h).for_each(|(a, v)| *a += v / n as f64);
        }
        Ok(Self {
            problem,
            compressors,
            scheme: ParticipationScheme::full(n)?,
            config,
            streams,
            x: x0,
            g,
            g_nodes: h_nodes.clone(),
            h_nodes,
            h_samples,
            round: 0,
        })
    }

    pub fn step(&mut self) -> Result<()> {
        let p = self.problem;
        let plan = draw_plan(p, &self.compressors, &self.scheme, &self.config.variant, &self.streams, self.round);
        let VariantConfig { gamma, a, b, variant } = self.config;
        let x_old = self.x.clone();
        let x_new: Vec<f64> = x_old.iter().zip(&self.g).map(|(x, g)| x - gamma * g).collect();
        let n = p.nodes();
        let mut messages: Vec<SparseVec> = Vec::with_capacity(n);
        for i in 0..n {
            let h = &self.h_nodes[i];
            let h_plus = match (variant, &plan.batches[i]) {
                (Variant::Gradient, _) => {
                    let old = p.grad_full(i, &x_old)?;
                    combine(&p.grad_full(i, &x_new)?, 1.0 - b, h, &old)
                }
                (Variant::Page { p_page, .. }, _) if plan.coin => {
                    let old = p.grad_full(i, &x_old)?;
                    combine(&p.grad_full(i, &x_new)?, 1.0 - b / p_page, h, &old)
                }
                (Variant::Page { .. }, NodeBatch::Indices(idx)) => {
                    combine(h, 1.0, &p.grad_minibatch(i, idx, &x_new)?, &p.grad_minibatch(i, idx, &x_old)?)
                }
                (Variant::FiniteMvr { .. }, NodeBatch::Indices(idx)) => {
                    let m = p.samples_per_node();
                    let scale = m as f64 / idx.len() as f64;
                    for &j in idx {
                        let new = p.grad_sample(i, j, &x_new)?;
                        let old = p.grad_sample(i, j, &x_old)?;
                        let row = &mut self.h_samples[i][j];
                        for k in 0..row.len() {
                            row[k] += scale * (new[k] - old[k] - b * (row[k] - old[k]));
                        }
                    }
                    let mut mean = vec![0.0; p.dim()];
                    for row in &self.h_samples[i] {
                        mean.iter_mut().zip(row).for_each(|(acc, v)| *acc += v / m as f64);
                    }
                    mean
                }
                (Variant::Mvr { .. }, NodeBatch::Xi(xi)) => {
                    let old = p.grad_xi(i, xi, &x_old)?;
                    combine(&p.grad_xi(i, xi, &x_new)?, 1.0 - b, h, &old)
                }
                (Variant::SyncMvr { p_mega, .. }, NodeBatch::Xi(xi)) => {
                    let old = p.grad_xi(i, xi, &x_old)?;
                    let new = p.grad_xi(i, xi, &x_new)?;
                    if plan.coin {
                        combine(&new, 1.0 - b / p_mega, h, &old)
                    } else {
                        combine(h, 1.0, &new, &old)
                    }
                }
                _ => return Err(Error::InvalidConfig("round plan does not fit the variant".into())),
            };
            let delta: Vec<f64> = h_plus
                .iter()
                .zip(h)
                .zip(&self.g_nodes[i])
                .map(|((hp, hv), gv)| hp - hv - a * (gv - hv))
                .collect();
            let message = if plan.coin && matches!(variant, Variant::SyncMvr { .. }) {
                SparseVec::from_dense(&delta)
            } else {
                self.compressors[i].apply(&delta, plan.supports[i].as_deref())?
            };
            message.axpy_into(1.0, &mut self.g_nodes[i]);
            self.h_nodes[i] = h_plus;
            messages.push(message);
        }
        for m in &messages {
            m.axpy_into(1.0 / n as f64, &mut self.g);
        }
        self.x = x_new;
        self.round += 1;
        Ok(())
    }

    /// Uniform output index with the same draw as the main engine.
    pub fn output_index(&self, rounds: usize) -> usize {
        self.streams.rng(Stream::Output, 0, 0).random_range(0..rounds)
    }
}
