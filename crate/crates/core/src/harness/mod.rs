//! Experiment configuration, execution and metrics output.

pub mod config;
pub mod experiment;
pub mod metrics;

pub use config::{ExperimentConfig, GammaSource};
pub use experiment::{best_candidate, build_problem, csv_name, CandidateSummary, run_experiment, slowdown_ratio, Experiment, ExperimentOutcome, ExperimentSummary, SlowdownPoint};
pub use metrics::{metrics_rows, rounds_to_threshold, MetricsRow};
