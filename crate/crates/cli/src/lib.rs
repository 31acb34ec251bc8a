//! Config-driven experiment harness around the simulator core: parses a
//! declarative TOML experiment, executes every (algorithm, topology, seed)
//! cell, and emits per-cell metrics CSVs, a JSON summary, bound-check
//! reports, and static SVG convergence plots.

pub mod bounds;
pub mod config;
pub mod metrics_csv;
pub mod plot;
pub mod runner;

pub use config::ExperimentConfig;
pub use runner::run_experiment;
