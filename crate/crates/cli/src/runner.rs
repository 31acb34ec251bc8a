//! Experiment execution: every (algorithm, topology, seed) cell runs
//! independently; each writes `<algo>_<topo>_<seed>.csv`, and the harness
//! finishes with per-topology SVG plots and a `summary.json`. A diverged
//! cell is recorded in the summary and the remaining cells continue.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cgtvr::error::Result;
use cgtvr::network::metropolis_weights;
use cgtvr::optimizers::{run, Termination, Trajectory};

use crate::config::ExperimentConfig;
use crate::metrics_csv::emit_metrics_csv;
use crate::plot::render_svg;

/// Final state of one experiment cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellSummary {
    pub algorithm: String,
    pub topology: String,
    pub seed: u64,
    pub csv: String,
    pub termination: Termination,
    pub rows: usize,
    pub final_data_pass: f64,
    pub final_grad_norm_sq: f64,
    pub final_grad_map_sq: f64,
    pub final_objective: f64,
    pub final_consensus_error: f64,
    pub min_grad_map_sq: f64,
    pub t_out: usize,
    pub grad_map_sq_at_t_out: f64,
    pub restarts_per_agent: Vec<u64>,
}

impl CellSummary {
    fn from_trajectory(
        traj: &Trajectory,
        algorithm: &str,
        topology: &str,
        seed: u64,
        csv: String,
    ) -> Self {
        let last = traj.final_row();
        CellSummary {
            algorithm: algorithm.to_string(),
            topology: topology.to_string(),
            seed,
            csv,
            termination: traj.termination,
            rows: traj.rows.len(),
            final_data_pass: last.data_pass,
            final_grad_norm_sq: last.grad_norm_sq,
            final_grad_map_sq: last.grad_map_sq,
            final_objective: last.objective,
            final_consensus_error: last.consensus_error,
            min_grad_map_sq: traj.min_grad_map_sq,
            t_out: traj.t_out,
            grad_map_sq_at_t_out: traj.grad_map_sq_at_t_out,
            restarts_per_agent: traj.per_agent_restarts.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub problem: String,
    pub cells: Vec<CellSummary>,
    pub plots: Vec<String>,
}

/// Metrics plotted per topology (first seed of every algorithm).
const PLOT_METRICS: [&str; 4] = [
    "grad_norm_sq",
    "grad_map_sq",
    "objective",
    "consensus_error",
];

pub fn run_experiment_config(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let out_dir = config.resolved_output_dir();
    std::fs::create_dir_all(&out_dir)?;
    let problem = config.problem.build()?;

    let mut cells = Vec::new();
    let mut plots = Vec::new();

    for topo in &config.topologies {
        let graph = topo.build()?;
        let mixing = metropolis_weights(&graph)?;
        let topo_label = topo.label();
        if config.export_mixing {
            std::fs::write(
                out_dir.join(format!("mixing_{topo_label}.csv")),
                mixing.to_csv(),
            )?;
        }

        // first-seed CSVs per algorithm feed the per-topology plots
        let mut first_seed_csvs: Vec<PathBuf> = Vec::new();
        for algo in &config.algorithms {
            for (seed_idx, &seed) in config.seeds.iter().enumerate() {
                let run_cfg = algo.to_run_config(problem.as_ref(), seed, config)?;
                let traj = run(problem.as_ref(), &mixing, &run_cfg)?;
                let csv_name = format!("{}_{}_{}.csv", algo.display_label(), topo_label, seed);
                let csv_path = out_dir.join(&csv_name);
                emit_metrics_csv(&traj.rows, &csv_path)?;
                if seed_idx == 0 {
                    first_seed_csvs.push(csv_path.clone());
                }
                cells.push(CellSummary::from_trajectory(
                    &traj,
                    algo.display_label(),
                    &topo_label,
                    seed,
                    csv_name,
                ));
            }
        }

        for metric in PLOT_METRICS {
            let ok = first_seed_csvs.iter().any(|p| {
                crate::metrics_csv::read_metric_column(p, metric)
                    .map(|v| !v.is_empty())
                    .unwrap_or(false)
            });
            if !ok {
                continue;
            }
            let svg_name = format!("{topo_label}_{metric}.svg");
            render_svg(&first_seed_csvs, metric, &out_dir.join(&svg_name))?;
            plots.push(svg_name);
        }
    }

    let summary = ExperimentSummary {
        problem: config.problem.label().to_string(),
        cells,
        plots,
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| cgtvr::Error::Numeric(format!("summary serialization: {e}")))?;
    std::fs::write(out_dir.join("summary.json"), json)?;
    Ok(summary)
}

/// Parse the config at `path` and execute it.
pub fn run_experiment(path: &Path) -> Result<ExperimentSummary> {
    let config = ExperimentConfig::from_path(path)?;
    run_experiment_config(&config)
}
