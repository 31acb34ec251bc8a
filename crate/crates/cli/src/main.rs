//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 for configuration errors, 2 for runtime
//! errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cgtvr::error::Error;
use cgtvr_cli::bounds::check_bounds;
use cgtvr_cli::plot::render_svg;
use cgtvr_cli::runner::run_experiment;

#[derive(Parser)]
#[command(
    name = "cgtvr",
    about = "Decentralized clipped gradient tracking simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every (algorithm, topology, seed) cell of an experiment
    /// config; writes metrics CSVs, SVG plots, and summary.json.
    Run { config: PathBuf },
    /// Run the diagnostics suite of an experiment config and write
    /// bounds_report.json.
    CheckBounds { config: PathBuf },
    /// Plot one metric from existing metrics CSVs into an SVG.
    Plot {
        /// Metrics CSV files (one curve each).
        csv: Vec<PathBuf>,
        #[arg(long)]
        metric: String,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Ingestion(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => run_experiment(&config).map(|summary| {
            let diverged = summary
                .cells
                .iter()
                .filter(|c| matches!(c.termination, cgtvr::optimizers::Termination::Diverged { .. }))
                .count();
            println!(
                "{} cells completed ({} diverged), {} plots",
                summary.cells.len(),
                diverged,
                summary.plots.len()
            );
        }),
        Command::CheckBounds { config } => check_bounds(&config).map(|report| {
            for check in &report.checks {
                println!(
                    "{:<28} bound {:>12.5e}  observed {:>12.5e}  [{:?}]",
                    check.check, check.bound, check.observed, check.status
                );
            }
            println!(
                "theta = {:.4e} (theta0 = {:.4e}), Delta_f = {:.4e}, harmonic L = {:.4e}",
                report.theta, report.theta0, report.delta_f, report.harmonic_effective_l
            );
        }),
        Command::Plot {
            csv,
            metric,
            output,
        } => {
            if csv.is_empty() {
                Err(Error::config("plot needs at least one CSV input"))
            } else {
                render_svg(&csv, &metric, &output).map(|()| {
                    println!("wrote {}", output.display());
                })
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
