//! Running configured experiments: problem construction, parameter
//! resolution, step-size tuning and the participation slowdown study.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, GammaSource, SchemeName, VariantName, VariantSection};
use super::metrics::{estimate_f_star, metrics_rows, rounds_to_threshold, write_csv_file};
use crate::compressors::CompressorSpec;
use crate::error::{Error, Result};
use crate::optimizer::{run, Dasha, RunRecord, Variant, VariantConfig};
use crate::participation::ParticipationScheme;
use crate::problems::libsvm::read_libsvm;
use crate::problems::synthetic::SyntheticSpec;
use crate::problems::{Problem, SmoothnessEstimates};
use crate::rng::{Stream, Streams};
use crate::theory::{self, TheoryInputs, TheoryParams};

/// Gradient-descent steps used for the `f*` estimate in summaries.
const F_STAR_ROUNDS: usize = 2000;

pub fn build_problem(config: &ExperimentConfig) -> Result<Problem> {
    let p = &config.problem;
    let loss = config.loss();
    match (&p.dataset, &p.synthetic) {
        (Some(path), None) => {
            let data = read_libsvm(path, p.features)?;
            let mut rng = Streams::new(p.data_seed).rng(Stream::Data, 1, 0);
            Problem::split(data, p.nodes, loss, p.noise_sigma, &mut rng)
        }
        (None, Some(s)) => {
            let spec = SyntheticSpec {
                nodes: p.nodes,
                samples_per_node: s.samples_per_node,
                dim: s.dim,
                density: s.density,
                flip_prob: s.flip_prob,
            };
            spec.problem(loss, p.noise_sigma, p.data_seed)
        }
        _ => Err(Error::Config("problem needs exactly one of a dataset path or a synthetic table".into())),
    }
}

/// A problem together with resolved algorithm parameters.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub compressor: CompressorSpec,
    pub scheme: ParticipationScheme,
    pub smoothness: SmoothnessEstimates,
    pub inputs: TheoryInputs,
    /// Theory parameters, or the reason they are unavailable.
    pub theory: std::result::Result<TheoryParams, String>,
    /// Variant and momenta; `gamma` is the theory step size when known.
    pub variant: VariantConfig,
}

fn pick<T>(name: &str, over: Option<T>, theory: Option<T>, why: &std::result::Result<TheoryParams, String>) -> Result<T> {
    over.or(theory).ok_or_else(|| {
        let reason = why.as_ref().err().map_or(String::new(), |e| format!(" ({e})"));
        Error::Config(format!("`{name}` is not set and has no theory default{reason}"))
    })
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let problem = build_problem(config)?;
        Self::with_problem(config, problem)
    }

    pub fn with_problem(config: &ExperimentConfig, problem: Problem) -> Result<Self> {
        config.validate()?;
        if problem.nodes() != config.problem.nodes {
            return Err(Error::Config(format!("problem has {} nodes, config asks for {}", problem.nodes(), config.problem.nodes)));
        }
        let compressor = config.compressor(problem.dim())?;
        let scheme = config.scheme()?;
        let smoothness = problem.estimate_smoothness();
        let v: &VariantSection = &config.variant;
        let batch = v.batch.unwrap_or(1);
        let mut inputs = TheoryInputs::from_components(
            &smoothness,
            &compressor,
            &scheme,
            problem.samples_per_node(),
            batch,
            problem.sigma_sq(),
        );
        inputs.epsilon = v.epsilon;
        let theory = match v.name {
            VariantName::Gradient => theory::params_gradient(&inputs),
            VariantName::Page => match v.p_page {
                Some(p) => theory::params_page_with(&inputs, p),
                None => theory::params_page(&inputs),
            },
            VariantName::FiniteMvr => theory::params_finite_mvr(&inputs),
            VariantName::Mvr => theory::params_mvr(&inputs),
            VariantName::SyncMvr => match v.p_mega {
                Some(p) => theory::params_sync_mvr_with(&inputs, p),
                None => theory::params_sync_mvr(&inputs),
            },
        }
        .map_err(|e| e.to_string());
        let t = theory.as_ref().ok();
        let a = pick("a", v.a, t.map(|t| t.a), &theory)?;
        let b = pick("b", v.b, t.map(|t| t.b), &theory)?;
        let init = || pick("init_batch", v.init_batch, t.and_then(|t| t.init_batch).or(Some(batch)), &theory);
        let variant = match v.name {
            VariantName::Gradient => Variant::Gradient,
            VariantName::Page => Variant::Page { p_page: pick("p_page", v.p_page, t.and_then(|t| t.p_page), &theory)?, batch },
            VariantName::FiniteMvr => Variant::FiniteMvr { batch },
            VariantName::Mvr => Variant::Mvr { batch, init_batch: init()? },
            VariantName::SyncMvr => Variant::SyncMvr {
                p_mega: pick("p_mega", v.p_mega, t.and_then(|t| t.p_mega), &theory)?,
                batch,
                mega_batch: pick("mega_batch", v.mega_batch, t.and_then(|t| t.mega_batch), &theory)?,
                init_batch: init()?,
            },
        };
        let gamma = t.map_or(0.0, |t| t.gamma_max);
        let variant = VariantConfig::new(variant, gamma, a, b)?;
        Ok(Self { config: config.clone(), problem, compressor, scheme, smoothness, inputs, theory, variant })
    }

    /// Candidate step sizes of the configured gamma source.
    pub fn gammas(&self) -> Result<Vec<f64>> {
        match self.config.run.gamma.candidates() {
            Some(c) => Ok(c),
            None => match &self.theory {
                Ok(t) => Ok(vec![t.gamma_max]),
                Err(e) => Err(Error::Config(format!("no theory step size: {e}"))),
            },
        }
    }

    pub fn run_seed(&self, gamma: f64, seed: u64) -> Result<RunRecord> {
        let config = VariantConfig { gamma, ..self.variant };
        run(&self.problem, self.compressor, self.scheme, config, self.config.run.rounds, seed)
    }

    /// Seed-averaged first round with `||grad f||^2 <= tau`, or `None` if
    /// some seed diverges or never gets there within the configured rounds.
    pub fn mean_rounds_to_reach(&self, gamma: f64, tau: f64) -> Result<Option<f64>> {
        let config = VariantConfig { gamma, ..self.variant };
        let x0 = vec![0.0; self.problem.dim()];
        let n = self.problem.nodes();
        let mut total = 0.0;
        for &seed in &self.config.run.seeds {
            let dasha = Dasha::new(&self.problem, vec![self.compressor; n], self.scheme, config, x0.clone(), seed)?;
            match dasha.rounds_to_reach(self.config.run.rounds, tau) {
                Ok(Some(t)) => total += t as f64,
                Ok(None) | Err(Error::Divergence { .. }) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(total / self.config.run.seeds.len() as f64))
    }

    /// Runs every `(gamma, seed)` pair in parallel. Diverged runs come back
    /// as `None`; other failures abort.
    pub fn run_grid(&self, gammas: &[f64]) -> Result<Vec<Vec<Option<RunRecord>>>> {
        let seeds = &self.config.run.seeds;
        let jobs: Vec<(usize, usize)> = (0..gammas.len()).flat_map(|g| (0..seeds.len()).map(move |s| (g, s))).collect();
        let results: Vec<Result<Option<RunRecord>>> = jobs
            .par_iter()
            .map(|&(g, s)| match self.run_seed(gammas[g], seeds[s]) {
                Ok(rec) if rec.rows.iter().all(|r| r.f.is_finite() && r.grad_norm_sq.is_finite()) => Ok(Some(rec)),
                Ok(_) | Err(Error::Divergence { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect();
        let mut out = vec![Vec::with_capacity(seeds.len()); gammas.len()];
        for ((g, _), r) in jobs.into_iter().zip(results) {
            out[g].push(r?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub gamma: f64,
    pub diverged_seeds: Vec<u64>,
    /// Seed-averaged final squared gradient norm; absent if any seed diverged.
    pub mean_final_grad_norm_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_grad_norm_sq: f64,
    pub mean_grad_norm_sq: f64,
    pub final_f: f64,
    pub rounds_to_threshold: Option<usize>,
    pub x_hat_index: usize,
    pub coords_sent_cum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub variant: String,
    pub gamma_source: GammaSource,
    pub chosen_gamma: f64,
    pub a: f64,
    pub b: f64,
    pub theory: Option<TheoryParams>,
    pub smoothness: SmoothnessEstimates,
    pub sigma_sq: f64,
    pub rounds: usize,
    pub threshold: Option<f64>,
    pub candidates: Vec<CandidateSummary>,
    pub seeds: Vec<SeedSummary>,
    pub mean_final_grad_norm_sq: f64,
    pub f_star_estimate: f64,
    pub delta0_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: ExperimentSummary,
    /// Records of the chosen step size, one per seed.
    pub records: Vec<RunRecord>,
}

/// Index of the candidate with the smallest seed-averaged final squared
/// gradient norm, skipping candidates with a diverged seed.
pub fn best_candidate(candidates: &[CandidateSummary]) -> Result<usize> {
    candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.mean_final_grad_norm_sq.map(|v| (i, v)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(i, _)| i)
        .ok_or(Error::AllDiverged)
}

pub fn csv_name(seed: u64, gamma: f64) -> String {
    format!("seed{seed}_gamma{gamma:e}.csv")
}

/// Runs every seed for every candidate step size, writes one CSV per
/// `(seed, gamma)` and a `summary.json` into `out_dir`, and picks the step
/// size with the smallest seed-averaged final squared gradient norm among
/// candidates with no diverged seed.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutcome> {
    let exp = Experiment::build(config)?;
    run_built(&exp, out_dir)
}

pub fn run_built(exp: &Experiment, out_dir: Option<&Path>) -> Result<ExperimentOutcome> {
    let cfg = &exp.config;
    let gammas = exp.gammas()?;
    let grid = exp.run_grid(&gammas)?;

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for (gamma, runs) in gammas.iter().zip(&grid) {
            for rec in runs.iter().flatten() {
                write_csv_file(&metrics_rows(rec), &dir.join(csv_name(rec.seed, *gamma)))?;
            }
        }
    }

    let candidates: Vec<CandidateSummary> = gammas
        .iter()
        .zip(&grid)
        .map(|(&gamma, runs)| {
            let diverged_seeds: Vec<u64> =
                cfg.run.seeds.iter().zip(runs).filter(|(_, r)| r.is_none()).map(|(s, _)| *s).collect();
            let mean_final_grad_norm_sq = diverged_seeds.is_empty().then(|| {
                runs.iter().flatten().map(RunRecord::final_grad_norm_sq).sum::<f64>() / runs.len() as f64
            });
            CandidateSummary { gamma, diverged_seeds, mean_final_grad_norm_sq }
        })
        .collect();
    let best = best_candidate(&candidates)?;
    let records: Vec<RunRecord> = grid[best].iter().flatten().cloned().collect();

    let seeds: Vec<SeedSummary> = records
        .iter()
        .map(|rec| {
            let rows = metrics_rows(rec);
            SeedSummary {
                seed: rec.seed,
                final_grad_norm_sq: rec.final_grad_norm_sq(),
                mean_grad_norm_sq: rec.mean_grad_norm_sq(),
                final_f: rec.rows.last().map_or(f64::NAN, |r| r.f),
                rounds_to_threshold: cfg.run.threshold.and_then(|tau| rounds_to_threshold(&rows, tau)),
                x_hat_index: rec.x_hat_index,
                coords_sent_cum: rows.last().map_or(0.0, |r| r.coords_sent_cum),
            }
        })
        .collect();
    let min_seen = grid.iter().flatten().flatten().map(RunRecord::min_f).fold(f64::INFINITY, f64::min);
    let f_star_estimate = estimate_f_star(&exp.problem, exp.smoothness.l, F_STAR_ROUNDS)?.min(min_seen);
    let summary = ExperimentSummary {
        variant: exp.variant.variant.name().to_string(),
        gamma_source: cfg.run.gamma,
        chosen_gamma: gammas[best],
        a: exp.variant.a,
        b: exp.variant.b,
        theory: exp.theory.as_ref().ok().cloned(),
        smoothness: exp.smoothness,
        sigma_sq: exp.problem.sigma_sq(),
        rounds: cfg.run.rounds,
        threshold: cfg.run.threshold,
        mean_final_grad_norm_sq: candidates[best].mean_final_grad_norm_sq.unwrap_or(f64::NAN),
        candidates,
        seeds,
        f_star_estimate,
        delta0_estimate: records[0].f0 - f_star_estimate,
    };
    if let Some(dir) = out_dir {
        let file = std::fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &summary)?;
    }
    Ok(ExperimentOutcome { summary, records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowdownPoint {
    pub s: usize,
    pub gamma: f64,
    /// Seed-averaged rounds to reach the threshold.
    pub rounds: f64,
    /// `rounds(s) / rounds(n)`.
    pub ratio: f64,
}

/// Rounds-to-threshold under s-nice participation for each `s`, relative
/// to full participation. Each setting tunes its own step size over the
/// configured candidates, minimizing the seed-averaged rounds to reach
/// `tau`; a candidate qualifies only if every seed reaches it.
pub fn slowdown_ratio(config: &ExperimentConfig, problem: &Problem, s_values: &[usize], tau: f64) -> Result<Vec<SlowdownPoint>> {
    let n = config.problem.nodes;
    let tuned = |s: usize| -> Result<(f64, f64)> {
        let mut cfg = config.clone();
        cfg.participation.scheme = SchemeName::SNice;
        cfg.participation.s = Some(s);
        let exp = Experiment::with_problem(&cfg, problem.clone())?;
        let gammas = exp.gammas()?;
        let scores = gammas.par_iter().map(|&g| exp.mean_rounds_to_reach(g, tau)).collect::<Result<Vec<_>>>()?;
        gammas
            .iter()
            .zip(scores)
            .filter_map(|(g, r)| r.map(|r| (*g, r)))
            .min_by(|x, y| x.1.total_cmp(&y.1).then(y.0.total_cmp(&x.0)))
            .ok_or(Error::AllDiverged)
    };
    let (base_gamma, base) = tuned(n)?;
    s_values
        .iter()
        .map(|&s| {
            let (gamma, rounds) = if s == n { (base_gamma, base) } else { tuned(s)? };
            Ok(SlowdownPoint { s, gamma, rounds, ratio: rounds / base })
        })
        .collect()
}
