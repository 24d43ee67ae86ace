use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_k_finite_mvr, compute_k_gradient, compute_k_mvr, compute_k_page, compute_k_sync_mvr, Variant, VariantConfig};
use crate::compressors::{partial_fisher_yates, CompressorSpec, SparseVec};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, max_abs_diff, mean_of, norm_sq};
use crate::participation::ParticipationScheme;
use crate::problems::{Problem, XiBatch};
use crate::rng::{Stream, Streams};

/// Local data a node uses in one round.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeBatch {
    /// Node is absent this round.
    Unused,
    /// Exact local gradients.
    Full,
    /// Sample indices (with or without replacement depending on the variant).
    Indices(Vec<usize>),
    /// Stochastic draws.
    Xi(XiBatch),
}

/// Every random quantity of one round. Drawing the plan separately from
/// applying it lets tests enumerate plans and lets the reference
/// implementation consume identical draws.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundPlan {
    pub mask: Vec<bool>,
    /// Shared coin: PAGE full-gradient branch or SYNC-MVR mega-batch round.
    pub coin: bool,
    pub supports: Vec<Option<Vec<usize>>>,
    pub batches: Vec<NodeBatch>,
}

pub fn draw_plan(
    problem: &Problem,
    compressors: &[CompressorSpec],
    scheme: &ParticipationScheme,
    variant: &Variant,
    streams: &Streams,
    round: usize,
) -> RoundPlan {
    let t = round as u64;
    let mask = scheme.sample_round(&mut streams.rng(Stream::Participation, t, 0));
    let coin = match *variant {
        Variant::Page { p_page, .. } => streams.rng(Stream::Coin, t, 0).random_bool(p_page),
        Variant::SyncMvr { p_mega, .. } => streams.rng(Stream::Coin, t, 0).random_bool(p_mega),
        _ => false,
    };
    let uncompressed = coin && matches!(variant, Variant::SyncMvr { .. });
    let m = problem.samples_per_node();
    let mut supports = Vec::with_capacity(mask.len());
    let mut batches = Vec::with_capacity(mask.len());
    for (i, &active) in mask.iter().enumerate() {
        if !active {
            supports.push(None);
            batches.push(NodeBatch::Unused);
            continue;
        }
        supports.push(if uncompressed {
            None
        } else {
            compressors[i].sample_support(&mut streams.rng(Stream::Compressor, t, i as u64))
        });
        let mut rng = streams.rng(Stream::Batch, t, i as u64);
        batches.push(match *variant {
            Variant::Gradient => NodeBatch::Full,
            Variant::Page { batch, .. } => {
                if coin {
                    NodeBatch::Full
                } else {
                    NodeBatch::Indices((0..batch).map(|_| rng.random_range(0..m)).collect())
                }
            }
            Variant::FiniteMvr { batch } => {
                let mut idx = partial_fisher_yates(&mut rng, m, batch.min(m));
                idx.sort_unstable();
                NodeBatch::Indices(idx)
            }
            Variant::Mvr { batch, .. } => NodeBatch::Xi(problem.draw_xi(batch, &mut rng)),
            Variant::SyncMvr { batch, mega_batch, .. } => {
                NodeBatch::Xi(problem.draw_xi(if coin { mega_batch } else { batch }, &mut rng))
            }
        });
    }
    RoundPlan { mask, coin, supports, batches }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub x: Vec<f64>,
    /// Server aggregate `g`.
    pub g: Vec<f64>,
    pub g_nodes: Vec<Vec<f64>>,
    pub h_nodes: Vec<Vec<f64>>,
    /// Per-sample `h_ij` (finite-sum MVR only; empty otherwise).
    pub h_samples: Vec<Vec<Vec<f64>>>,
    pub round: usize,
}

impl OptimizerState {
    /// `max |g - (1/n) sum_i g_i|`.
    pub fn server_gap(&self) -> f64 {
        max_abs_diff(&self.g, &mean_of(&self.g_nodes))
    }

    /// `max_i max |h_i - (1/m) sum_j h_ij|`, zero without per-sample state.
    pub fn finite_mvr_gap(&self) -> f64 {
        self.h_samples
            .iter()
            .zip(&self.h_nodes)
            .filter(|(rows, _)| !rows.is_empty())
            .map(|(rows, h)| max_abs_diff(h, &mean_of(rows)))
            .fold(0.0, f64::max)
    }

    /// `(1/n) sum_i h_i`.
    pub fn h_mean(&self) -> Vec<f64> {
        mean_of(&self.h_nodes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub participants: usize,
    /// Coordinates transmitted by each node this round.
    pub coords_sent: Vec<usize>,
    pub coin: bool,
}

struct NodeUpdate {
    h: Vec<f64>,
    g: Vec<f64>,
    message: SparseVec,
}

/// A live run of the partial-participation method.
pub struct Dasha<'a> {
    problem: &'a Problem,
    compressors: Vec<CompressorSpec>,
    scheme: ParticipationScheme,
    config: VariantConfig,
    streams: Streams,
    state: OptimizerState,
    parallel: bool,
}

impl<'a> Dasha<'a> {
    /// Start from `x0` with the variant's initialization of `g_i` and `h_i`.
    pub fn new(
        problem: &'a Problem,
        compressors: Vec<CompressorSpec>,
        scheme: ParticipationScheme,
        config: VariantConfig,
        x0: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let streams = Streams::new(seed);
        let state = initial_state(problem, &config.variant, &streams, x0)?;
        Self::from_state(problem, compressors, scheme, config, state, seed)
    }

    /// Resume from an arbitrary state.
    pub fn from_state(
        problem: &'a Problem,
        compressors: Vec<CompressorSpec>,
        scheme: ParticipationScheme,
        config: VariantConfig,
        state: OptimizerState,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let n = problem.nodes();
        let d = problem.dim();
        if scheme.nodes() != n {
            return Err(Error::InvalidConfig(format!("scheme has {} nodes, problem has {n}", scheme.nodes())));
        }
        if compressors.len() != n {
            return Err(Error::InvalidConfig(format!("{} compressors for {n} nodes", compressors.len())));
        }
        if let Some(c) = compressors.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, actual: c.dim() });
        }
        if let Variant::FiniteMvr { batch } = config.variant {
            if batch > problem.samples_per_node() {
                return Err(Error::InvalidConfig(format!(
                    "finite-sum batch {batch} exceeds the {} local samples",
                    problem.samples_per_node()
                )));
            }
        }
        let shapes_ok = state.x.len() == d
            && state.g.len() == d
            && state.g_nodes.len() == n
            && state.h_nodes.len() == n
            && state.h_samples.len() == n
            && state.g_nodes.iter().chain(&state.h_nodes).all(|v| v.len() == d);
        if !shapes_ok {
            return Err(Error::InvalidConfig("optimizer state does not match the problem shape".into()));
        }
        if matches!(config.variant, Variant::FiniteMvr { .. })
            && state.h_samples.iter().any(|rows| rows.len() != problem.samples_per_node())
        {
            return Err(Error::InvalidConfig("finite-sum MVR needs per-sample state on every node".into()));
        }
        let parallel = n > 1 && problem.dataset().nnz() >= 20_000;
        Ok(Self {
            problem,
            compressors,
            scheme,
            config,
            streams: Streams::new(seed),
            state,
            parallel,
        })
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn config(&self) -> &VariantConfig {
        &self.config
    }

    pub fn p_a(&self) -> f64 {
        self.scheme.p_a()
    }

    /// Draw the randomness of the upcoming round.
    pub fn plan(&self) -> RoundPlan {
        draw_plan(self.problem, &self.compressors, &self.scheme, &self.config.variant, &self.streams, self.state.round)
    }

    pub fn step(&mut self) -> Result<RoundReport> {
        let plan = self.plan();
        self.apply_round(&plan)
    }

    /// Execute one round with the given draws.
    pub fn apply_round(&mut self, plan: &RoundPlan) -> Result<RoundReport> {
        let n = self.problem.nodes();
        if plan.mask.len() != n || plan.supports.len() != n || plan.batches.len() != n {
            return Err(Error::InvalidConfig("round plan does not match the node count".into()));
        }
        let round = self.state.round;
        let x_old = self.state.x.clone();
        let mut x_new = x_old.clone();
        axpy(-self.config.gamma, &self.state.g, &mut x_new);
        if !all_finite(&x_new) {
            return Err(Error::Divergence { round, what: "x" });
        }

        let ctx = NodeContext {
            problem: self.problem,
            compressors: &self.compressors,
            config: &self.config,
            p_a: self.scheme.p_a(),
            plan,
            x_new: &x_new,
            x_old: &x_old,
            round,
        };
        let OptimizerState { g_nodes, h_nodes, h_samples, .. } = &mut self.state;
        let (g_nodes, h_nodes) = (&*g_nodes, &*h_nodes);
        let work = |(i, rows): (usize, &mut Vec<Vec<f64>>)| ctx.update(i, &g_nodes[i], &h_nodes[i], rows);
        let updates: Vec<Result<Option<NodeUpdate>>> = if self.parallel {
            h_samples.par_iter_mut().enumerate().map(work).collect()
        } else {
            h_samples.iter_mut().enumerate().map(work).collect()
        };

        let mut coords_sent = vec![0; n];
        let inv_n = 1.0 / n as f64;
        for (i, update) in updates.into_iter().enumerate() {
            if let Some(u) = update? {
                coords_sent[i] = u.message.stored();
                u.message.axpy_into(inv_n, &mut self.state.g);
                self.state.g_nodes[i] = u.g;
                self.state.h_nodes[i] = u.h;
            }
        }
        if !all_finite(&self.state.g) {
            return Err(Error::Divergence { round, what: "g" });
        }
        self.state.x = x_new;
        self.state.round += 1;
        Ok(RoundReport {
            participants: plan.mask.iter().filter(|b| **b).count(),
            coords_sent,
            coin: plan.coin,
        })
    }

    /// First round `t < max_rounds` with `||grad f(x^t)||^2 <= tau`, stopping
    /// as soon as it is found. Diverged runs give an error.
    pub fn rounds_to_reach(mut self, max_rounds: usize, tau: f64) -> Result<Option<usize>> {
        for t in 0..max_rounds {
            if norm_sq(&self.problem.full_gradient(&self.state.x)?) <= tau {
                return Ok(Some(t));
            }
            self.step()?;
        }
        Ok(None)
    }

    /// Run `rounds` rounds, recording exact diagnostics at every iterate.
    pub fn run_for(mut self, rounds: usize) -> Result<RunRecord> {
        if rounds == 0 {
            return Err(Error::InvalidHorizon);
        }
        let x_hat_index = self.streams.rng(Stream::Output, 0, 0).random_range(0..rounds);
        let f0 = self.problem.value(&self.state.x)?;
        let mut rows = Vec::with_capacity(rounds);
        let mut x_hat = Vec::new();
        for t in 0..rounds {
            let f = if t == 0 { f0 } else { self.problem.value(&self.state.x)? };
            let grad_norm_sq = norm_sq(&self.problem.full_gradient(&self.state.x)?);
            if t == x_hat_index {
                x_hat = self.state.x.clone();
            }
            let report = self.step()?;
            rows.push(RunRow {
                t,
                f,
                grad_norm_sq,
                coords_sent: report.coords_sent,
                participants: report.participants,
            });
        }
        Ok(RunRecord {
            seed: self.streams.master(),
            gamma: self.config.gamma,
            rows,
            x_hat_index,
            x_hat,
            x_final: self.state.x,
            f0,
        })
    }
}

struct NodeContext<'p> {
    problem: &'p Problem,
    compressors: &'p [CompressorSpec],
    config: &'p VariantConfig,
    p_a: f64,
    plan: &'p RoundPlan,
    x_new: &'p [f64],
    x_old: &'p [f64],
    round: usize,
}

impl NodeContext<'_> {
    fn update(&self, i: usize, g_i: &[f64], h_i: &[f64], rows: &mut Vec<Vec<f64>>) -> Result<Option<NodeUpdate>> {
        if !self.plan.mask[i] {
            return Ok(None);
        }
        let (p, cfg, plan) = (self.problem, self.config, self.plan);
        let batch = &plan.batches[i];
        let k = match (cfg.variant, batch) {
            (Variant::Gradient, _) => compute_k_gradient(p, i, self.x_new, self.x_old, h_i, cfg.b)?,
            (Variant::Page { p_page, .. }, NodeBatch::Full) if plan.coin => {
                compute_k_page(p, i, self.x_new, self.x_old, h_i, cfg.b, p_page, true, &[])?
            }
            (Variant::Page { p_page, .. }, NodeBatch::Indices(idx)) if !plan.coin => {
                compute_k_page(p, i, self.x_new, self.x_old, h_i, cfg.b, p_page, false, idx)?
            }
            (Variant::FiniteMvr { .. }, NodeBatch::Indices(idx)) => {
                compute_k_finite_mvr(p, i, self.x_new, self.x_old, rows, cfg.b, self.p_a, idx)?
            }
            (Variant::Mvr { .. }, NodeBatch::Xi(xi)) => compute_k_mvr(p, i, self.x_new, self.x_old, h_i, cfg.b, xi)?,
            (Variant::SyncMvr { p_mega, .. }, NodeBatch::Xi(xi)) => {
                compute_k_sync_mvr(p, i, self.x_new, self.x_old, h_i, cfg.b, p_mega, plan.coin, xi)?
            }
            _ => return Err(Error::InvalidConfig(format!("round plan batch does not fit the {} variant", cfg.variant.name()))),
        };

        let inv_pa = 1.0 / self.p_a;
        let momentum = cfg.a * inv_pa;
        let mut h = h_i.to_vec();
        axpy(inv_pa, &k, &mut h);
        let arg: Vec<f64> = k
            .iter()
            .zip(g_i)
            .zip(h_i)
            .map(|((kv, gv), hv)| kv * inv_pa - momentum * (gv - hv))
            .collect();
        let message = if plan.coin && matches!(cfg.variant, Variant::SyncMvr { .. }) {
            SparseVec::from_dense(&arg)
        } else {
            self.compressors[i].apply(&arg, plan.supports[i].as_deref())?
        };
        let mut g = g_i.to_vec();
        message.axpy_into(1.0, &mut g);
        if !all_finite(&h) || rows.iter().any(|r| !all_finite(r)) {
            return Err(Error::Divergence { round: self.round, what: "h" });
        }
        if !all_finite(&g) {
            return Err(Error::Divergence { round: self.round, what: "g_i" });
        }
        Ok(Some(NodeUpdate { h, g, message }))
    }
}

fn initial_state(problem: &Problem, variant: &Variant, streams: &Streams, x0: Vec<f64>) -> Result<OptimizerState> {
    let n = problem.nodes();
    let d = problem.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: x0.len() });
    }
    let mut h_samples = vec![Vec::new(); n];
    let mut h_nodes = Vec::with_capacity(n);
    for (i, rows) in h_samples.iter_mut().enumerate() {
        let h = match *variant {
            Variant::Gradient | Variant::Page { .. } => problem.grad_full(i, &x0)?,
            Variant::FiniteMvr { .. } => {
                *rows = (0..problem.samples_per_node())
                    .map(|j| problem.grad_sample(i, j, &x0))
                    .collect::<Result<_>>()?;
                mean_of(rows)
            }
            Variant::Mvr { init_batch, .. } | Variant::SyncMvr { init_batch, .. } => {
                let xi = problem.draw_xi(init_batch, &mut streams.rng(Stream::Init, 0, i as u64));
                problem.grad_xi(i, &xi, &x0)?
            }
        };
        h_nodes.push(h);
    }
    let g_nodes = h_nodes.clone();
    Ok(OptimizerState {
        g: mean_of(&g_nodes),
        x: x0,
        g_nodes,
        h_nodes,
        h_samples,
        round: 0,
    })
}

/// Diagnostics for one iterate `x^t` and the round leaving it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub t: usize,
    pub f: f64,
    pub grad_norm_sq: f64,
    pub coords_sent: Vec<usize>,
    pub participants: usize,
}

impl RunRow {
    pub fn mean_coords_sent(&self) -> f64 {
        self.coords_sent.iter().sum::<usize>() as f64 / self.coords_sent.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub gamma: f64,
    pub rows: Vec<RunRow>,
    /// Index of the uniformly drawn output iterate.
    pub x_hat_index: usize,
    pub x_hat: Vec<f64>,
    pub x_final: Vec<f64>,
    pub f0: f64,
}

impl RunRecord {
    pub fn delta0(&self, f_star: f64) -> f64 {
        self.f0 - f_star
    }

    pub fn mean_grad_norm_sq(&self) -> f64 {
        self.rows.iter().map(|r| r.grad_norm_sq).sum::<f64>() / self.rows.len() as f64
    }

    pub fn final_grad_norm_sq(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.grad_norm_sq)
    }

    pub fn min_f(&self) -> f64 {
        self.rows.iter().map(|r| r.f).fold(f64::INFINITY, f64::min)
    }
}

/// Run from the origin with one compressor shared by all nodes.
pub fn run(
    problem: &Problem,
    compressor: CompressorSpec,
    scheme: ParticipationScheme,
    config: VariantConfig,
    rounds: usize,
    seed: u64,
) -> Result<RunRecord> {
    if rounds == 0 {
        return Err(Error::InvalidHorizon);
    }
    let x0 = vec![0.0; problem.dim()];
    let compressors = vec![compressor; problem.nodes()];
    Dasha::new(problem, compressors, scheme, config, x0, seed)?.run_for(rounds)
}
