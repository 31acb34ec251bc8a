//! End-to-end behavior of the experiment runner: row-count contract,
//! byte-level determinism, validation errors, and the bounds driver.

use std::path::Path;

use cgtvr_cli::config::ExperimentConfig;
use cgtvr_cli::runner::run_experiment_config;

fn small_config(out_dir: &Path) -> ExperimentConfig {
    let toml = format!(
        r#"
output_dir = "{}"
seeds = [7]
max_iterations = 10

[problem]
type = "quadratic_inverse"
dim = 8
agents = 4
n_per_agent = 16
noise_std = 0.05
seed = 3

[[topologies]]
kind = "ring"
m = 4

[[algorithms]]
name = "cgtvr-stag"
theta = 10.0
"#,
        out_dir.display()
    );
    toml::from_str(&toml).unwrap()
}

#[test]
fn row_count_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let summary = run_experiment_config(&cfg).unwrap();
    assert_eq!(summary.cells.len(), 1);
    assert_eq!(summary.cells[0].rows, 11);
    let csv = std::fs::read_to_string(dir.path().join(&summary.cells[0].csv)).unwrap();
    assert_eq!(csv.lines().count(), 12); // header + t = 0..10
}

#[test]
fn reruns_are_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = run_experiment_config(&small_config(dir_a.path())).unwrap();
    let b = run_experiment_config(&small_config(dir_b.path())).unwrap();
    let csv_a = std::fs::read(dir_a.path().join(&a.cells[0].csv)).unwrap();
    let csv_b = std::fs::read(dir_b.path().join(&b.cells[0].csv)).unwrap();
    assert_eq!(csv_a, csv_b);
}

#[test]
fn unknown_algorithm_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.algorithms[0].name = "sgd".into();
    let err = cfg.validate().unwrap_err();
    assert!(matches!(err, cgtvr::Error::Config(_)));
    assert!(err.to_string().contains("sgd"));
}

#[test]
fn plots_and_summary_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let summary = run_experiment_config(&cfg).unwrap();
    assert!(dir.path().join("summary.json").exists());
    for plot in &summary.plots {
        assert!(dir.path().join(plot).exists());
    }
    assert!(summary.plots.iter().any(|p| p.contains("grad_norm_sq")));
}

#[test]
fn bounds_driver_reports_checks() {
    let dir = tempfile::tempdir().unwrap();
    let toml = format!(
        r#"
output_dir = "{}"
seeds = [1]
max_iterations = 10

[problem]
type = "quadratic_inverse"
dim = 8
agents = 2
n_per_agent = 16
noise_std = 0.05
seed = 33

[[topologies]]
kind = "ring"
m = 2

[[algorithms]]
name = "cgtvr-stag"

[bounds]
seeds = 5
r0 = 0.3
delta = 0.02
epoch_distance = 0.2
iterations = 120
"#,
        dir.path().display()
    );
    let cfg: ExperimentConfig = toml::from_str(&toml).unwrap();
    let report = cgtvr_cli::bounds::check_bounds_config(&cfg).unwrap();
    assert!(report.theta >= report.theta0);
    assert!(!report.checks.is_empty());
    assert!(
        report.all_applicable_pass(),
        "failing checks: {:?}",
        report
            .checks
            .iter()
            .filter(|c| c.status == cgtvr::diagnostics::CheckStatus::Fail)
            .collect::<Vec<_>>()
    );
}
