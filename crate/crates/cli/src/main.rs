//! Command-line front end for the simulator.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dasha_pp::harness::{run_experiment, Experiment, ExperimentConfig, ExperimentSummary, GammaSource};
use dasha_pp::problems::libsvm::read_libsvm;
use dasha_pp::verification::standard_suite;

#[derive(Parser)]
#[command(name = "dasha-pp", version, about = "Compressed, variance-reduced distributed optimization with partial participation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment with the configured step size source.
    Run(RunArgs),
    /// Tune the step size over a power-of-two grid.
    Tune(RunArgs),
    /// Print the theory parameters for a config.
    Params(ConfigArgs),
    /// Run the exact-enumeration checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dataset utilities.
    Data {
        #[command(subcommand)]
        command: DataCommand,
    },
}

#[derive(Subcommand)]
enum DataCommand {
    /// Sample count, feature count and density of a LIBSVM file.
    Stats {
        path: PathBuf,
        /// Declared feature count.
        #[arg(long)]
        features: Option<usize>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for CSV files and the summary.
    #[arg(long, short, env = "DASHA_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Low and high grid exponents for `tune`.
    #[arg(long, num_args = 2, value_names = ["I_MIN", "I_MAX"], allow_negative_numbers = true)]
    grid: Option<Vec<i32>>,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let path = &args.config.config;
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = args.seed {
        cfg.run.seeds = vec![seed];
    }
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary> {
    let outcome = run_experiment(cfg, Some(out)).context("experiment failed")?;
    Ok(outcome.summary)
}

fn report(summary: &ExperimentSummary, out: &Path) {
    println!("variant          {}", summary.variant);
    println!("gamma            {:e}", summary.chosen_gamma);
    println!("final |grad|^2   {:e}", summary.mean_final_grad_norm_sq);
    for s in &summary.seeds {
        let hit = s.rounds_to_threshold.map_or("-".to_string(), |r| r.to_string());
        println!("  seed {:<6} final {:e}  rounds-to-threshold {hit}", s.seed, s.final_grad_norm_sq);
    }
    println!("wrote {}", out.display());
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            let summary = execute(&cfg, &args.out)?;
            report(&summary, &args.out);
        }
        Command::Tune(args) => {
            let mut cfg = load(&args)?;
            cfg.run.gamma = match (&args.grid, cfg.run.gamma) {
                (Some(g), _) => GammaSource::Grid { i_min: g[0], i_max: g[1] },
                (None, g @ GammaSource::Grid { .. }) => g,
                (None, _) => GammaSource::DEFAULT_GRID,
            };
            cfg.validate()?;
            let summary = execute(&cfg, &args.out)?;
            for c in &summary.candidates {
                match c.mean_final_grad_norm_sq {
                    Some(v) => println!("gamma {:<12e} final |grad|^2 {v:e}", c.gamma),
                    None => println!("gamma {:<12e} diverged on seeds {:?}", c.gamma, c.diverged_seeds),
                }
            }
            report(&summary, &args.out);
        }
        Command::Params(args) => {
            let path = &args.config;
            let cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
            let exp = Experiment::build(&cfg)?;
            let body = serde_json::json!({
                "inputs": exp.inputs,
                "variant": exp.variant,
                "theory": exp.theory.as_ref().ok(),
                "theory_error": exp.theory.as_ref().err(),
            });
            println!("{}", serde_json::to_string_pretty(&body)?);
        }
        Command::Verify { seed } => {
            let checks = standard_suite(seed)?;
            let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
            let mut ok = true;
            for c in &checks {
                ok &= c.passed;
                println!("{:<width$}  {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Data { command: DataCommand::Stats { path, features } } => {
            let data = read_libsvm(&path, features).with_context(|| format!("reading {}", path.display()))?;
            let positives = data.labels().iter().filter(|y| **y > 0.0).count();
            println!("n_samples  {}", data.len());
            println!("d          {}", data.dim());
            println!("nnz        {}", data.nnz());
            println!("density    {}", data.density());
            println!("labels     +1: {positives}  -1: {}", data.len() - positives);
        }
    }
    Ok(ExitCode::SUCCESS)
}
