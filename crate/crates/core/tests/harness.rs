use std::path::Path;

use dasha_pp::harness::metrics::{write_csv, CSV_HEADER};
use dasha_pp::harness::*;
use dasha_pp::Error;

fn config(extra_run: &str, participation: &str, compressor: &str) -> ExperimentConfig {
    let text = format!(
        r#"
[problem]
loss = "squared-sigmoid"
nodes = 3
noise_sigma = 0.0

[problem.synthetic]
samples_per_node = 8
dim = 10

[participation]
{participation}

[compressor]
{compressor}

[variant]
name = "gradient"

[run]
{extra_run}
"#
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn fixed_theory_step_writes_full_csv() {
    let probe = Experiment::build(&config("rounds = 200\nseeds = [4]", "scheme = \"full\"", "kind = \"identity\"")).unwrap();
    let gamma = probe.theory.as_ref().unwrap().gamma_max;
    let cfg = config(&format!("rounds = 200\nseeds = [4]\ngamma = {gamma:e}"), "scheme = \"full\"", "kind = \"identity\"");
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, Some(dir.path())).unwrap();
    assert_eq!(out.summary.chosen_gamma, gamma);
    let rows = read_csv(&dir.path().join(csv_name(4, gamma)));
    assert_eq!(rows.len(), 200);
    for (t, row) in rows.iter().enumerate() {
        assert_eq!(row[0], t.to_string());
        let g: f64 = row[2].parse().unwrap();
        assert!(g.is_finite() && g >= 0.0);
    }
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn grid_runs_every_candidate_for_every_seed() {
    let cfg = config("rounds = 30\nseeds = [1, 2]\ngamma = \"grid\"", "scheme = \"s-nice\"\ns = 2", "kind = \"rand-k\"\nk = 3");
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, Some(dir.path())).unwrap();
    assert_eq!(out.summary.candidates.len(), 21);
    let csvs = std::fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "csv").count();
    let diverged: usize = out.summary.candidates.iter().map(|c| c.diverged_seeds.len()).sum();
    assert_eq!(csvs + diverged, 42);
    let best = out
        .summary
        .candidates
        .iter()
        .filter_map(|c| c.mean_final_grad_norm_sq)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(out.summary.mean_final_grad_norm_sq, best);
    assert_eq!(out.records.len(), 2);

    let json: serde_json::Value = serde_json::from_reader(std::fs::File::open(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["chosen_gamma"].as_f64().unwrap(), out.summary.chosen_gamma);
}

#[test]
fn csv_is_deterministic_and_accounting_adds_up() {
    let cfg = config("rounds = 60\nseeds = [7]\ngamma = 0.5", "scheme = \"s-nice\"\ns = 2", "kind = \"rand-k\"\nk = 3");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, Some(a.path())).unwrap();
    run_experiment(&cfg, Some(b.path())).unwrap();
    let name = csv_name(7, 0.5);
    let ta = std::fs::read(a.path().join(&name)).unwrap();
    assert_eq!(ta, std::fs::read(b.path().join(&name)).unwrap());

    let rows = read_csv(&a.path().join(&name));
    let mut prev = 0.0;
    for row in rows {
        let cum: f64 = row[3].parse().unwrap();
        let participants: usize = row[4].parse().unwrap();
        assert_eq!(participants, 2);
        // two nodes send three coordinates each, averaged over three nodes
        assert!((cum - prev - 2.0).abs() < 1e-12);
        prev = cum;
    }
}

#[test]
fn rounds_to_threshold_edges() {
    let cfg = config("rounds = 50\nseeds = [1]\ngamma = 0.25", "scheme = \"s-nice\"\ns = 1", "kind = \"rand-k\"\nk = 2");
    let out = run_experiment(&cfg, None).unwrap();
    let rows = metrics_rows(&out.records[0]);
    assert_eq!(rounds_to_threshold(&rows, f64::INFINITY), Some(0));
    assert_eq!(rounds_to_threshold(&rows, 0.0), None);
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 51);
}

#[test]
fn selection_skips_diverged_candidates() {
    let c = |gamma, v: Option<f64>| CandidateSummary {
        gamma,
        diverged_seeds: if v.is_none() { vec![0] } else { vec![] },
        mean_final_grad_norm_sq: v,
    };
    let cands = [c(1.0, Some(0.3)), c(2.0, None), c(4.0, Some(0.1)), c(8.0, None)];
    assert_eq!(best_candidate(&cands).unwrap(), 2);
    assert!(matches!(best_candidate(&[c(1.0, None), c(2.0, None)]), Err(Error::AllDiverged)));
}

#[test]
fn baseline_slowdown_is_one() {
    let cfg = config("rounds = 400\nseeds = [0, 1]\ngamma = { i_min = -2, i_max = 2 }", "scheme = \"full\"", "kind = \"rand-k\"\nk = 3");
    let problem = build_problem(&cfg).unwrap();
    let g0 = dasha_pp::linalg::norm_sq(&problem.full_gradient(&vec![0.0; problem.dim()]).unwrap());
    let pts = slowdown_ratio(&cfg, &problem, &[3, 1], 0.3 * g0).unwrap();
    assert_eq!(pts[0].ratio, 1.0);
    assert!(pts[1].ratio >= 1.0);
}

#[test]
fn libsvm_dataset_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/libsvm/valid/binary_features.svm");
    std::fs::copy(&data, dir.path().join("train.svm")).unwrap();
    let text = r#"
[problem]
loss = "softmax"
nodes = 1
dataset = "train.svm"

[variant]
name = "page"
batch = 2

[run]
rounds = 20
seeds = [0]
"#;
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, text).unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    let out = run_experiment(&cfg, Some(&dir.path().join("out"))).unwrap();
    assert_eq!(out.summary.variant, "page");
    assert!(out.summary.mean_final_grad_norm_sq.is_finite());

    std::fs::write(&path, text.replace("train.svm", "missing.svm")).unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert!(matches!(run_experiment(&cfg, None), Err(Error::Io(_))));
}
