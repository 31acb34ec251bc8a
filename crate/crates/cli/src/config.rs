//! Declarative experiment configuration (TOML or JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cgtvr::error::{Error, Result};
use cgtvr::network::TopologyConfig;
use cgtvr::optimizers::{AlgorithmKind, RadiusRule, RunConfig, StopRule};
use cgtvr::problems::{Problem, ProblemConfig, SmoothnessEstimator};

/// Environment variable overriding the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "CGTVR_OUTPUT_DIR";

/// One algorithm entry of the run matrix. Unset fields fall back to the
/// published parameter rules via [`RunConfig::paper`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub name: String,
    /// Label used in output file names; defaults to `name`. Lets several
    /// differently tuned entries of one algorithm coexist in a config.
    pub label: Option<String>,
    pub theta: Option<f64>,
    pub step_size: Option<f64>,
    pub smoothness: Option<SmoothnessEstimator>,
    pub radii: Option<RadiusRule>,
    pub tau: Option<Vec<usize>>,
    pub batch: Option<Vec<usize>>,
    pub restart_prob: Option<Vec<f64>>,
}

impl AlgorithmConfig {
    pub fn display_label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }

    pub fn kind(&self) -> Result<AlgorithmKind> {
        match self.name.as_str() {
            "cgtvr-stag" => Ok(AlgorithmKind::CgtvrStag),
            "cgtvr-sync" => Ok(AlgorithmKind::CgtvrSync),
            "gt-sarah" => Ok(AlgorithmKind::GtSarah),
            "d-get" => Ok(AlgorithmKind::DGet),
            "gt-vr" => Ok(AlgorithmKind::GtVr),
            other => Err(Error::config(format!(
                "unknown algorithm name '{other}' (expected cgtvr-stag, cgtvr-sync, gt-sarah, d-get, or gt-vr)"
            ))),
        }
    }

    /// Concrete run configuration for one seed.
    pub fn to_run_config(
        &self,
        problem: &dyn Problem,
        seed: u64,
        experiment: &ExperimentConfig,
    ) -> Result<RunConfig> {
        let mut cfg = RunConfig::paper(self.kind()?, problem, seed);
        if let Some(theta) = self.theta {
            cfg.theta = theta;
        }
        if let Some(step) = self.step_size {
            cfg.step_size = step;
        }
        if let Some(sm) = self.smoothness {
            cfg.smoothness = sm;
        }
        if let Some(radii) = &self.radii {
            cfg.radii = radii.clone();
        }
        if let Some(tau) = &self.tau {
            cfg.tau = tau.clone();
        }
        if let Some(batch) = &self.batch {
            cfg.batch = batch.clone();
        }
        if let Some(p) = &self.restart_prob {
            cfg.restart_prob = p.clone();
        }
        cfg.max_iterations = experiment.max_iterations;
        cfg.stop = experiment.stop;
        cfg.record_potential = experiment.record_potential;
        cfg.init_seed = experiment.init_seed;
        cfg.validate(problem)?;
        Ok(cfg)
    }
}

/// Parameters for the `check-bounds` subcommand: a staggered run with fixed
/// radii, repeated over seeds, against the theoretical bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundsConfig {
    #[serde(default = "default_bounds_seeds")]
    pub seeds: usize,
    /// Use the theoretical stepsize multiplier `theta0` (default). When
    /// false, `theta` must be given and theorem-level checks report
    /// informationally.
    #[serde(default = "default_true")]
    pub use_theta0: bool,
    pub theta: Option<f64>,
    pub r0: f64,
    pub delta: f64,
    pub epoch_distance: f64,
    #[serde(default = "default_bounds_iterations")]
    pub iterations: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_confidence")]
    pub confidence_p: f64,
    #[serde(default = "default_init_seed")]
    pub init_seed: u64,
}

fn default_bounds_seeds() -> usize {
    20
}
fn default_true() -> bool {
    true
}
fn default_bounds_iterations() -> usize {
    300
}
fn default_epsilon() -> f64 {
    1e-2
}
fn default_confidence() -> f64 {
    0.25
}
fn default_init_seed() -> u64 {
    1234
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub problem: ProblemConfig,
    pub topologies: Vec<TopologyConfig>,
    pub algorithms: Vec<AlgorithmConfig>,
    pub seeds: Vec<u64>,
    pub max_iterations: usize,
    #[serde(default = "default_stop")]
    pub stop: StopRule,
    #[serde(default = "default_true")]
    pub record_potential: bool,
    pub init_seed: Option<u64>,
    /// Also write each topology's mixing matrix as CSV.
    #[serde(default)]
    pub export_mixing: bool,
    pub bounds: Option<BoundsConfig>,
}

fn default_stop() -> StopRule {
    StopRule::None
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::config("at least one algorithm is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.topologies.is_empty() {
            return Err(Error::config("at least one topology is required"));
        }
        for algo in &self.algorithms {
            algo.kind()?;
        }
        Ok(())
    }

    /// Output directory after applying the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
output_dir = "out"
seeds = [1, 2]
max_iterations = 50

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

[stop]
kind = "data_pass_budget"
value = 40.0

[[algorithms]]
name = "cgtvr-stag"
theta = 10.0

[[algorithms]]
name = "gt-sarah"
step_size = 1e-2
"#;

    #[test]
    fn parses_and_builds_run_configs() {
        let cfg: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        cfg.validate().unwrap();
        let problem = cfg.problem.build().unwrap();
        let rc = cfg.algorithms[0]
            .to_run_config(problem.as_ref(), 1, &cfg)
            .unwrap();
        assert_eq!(rc.algorithm, AlgorithmKind::CgtvrStag);
        assert_eq!(rc.theta, 10.0);
        assert_eq!(rc.max_iterations, 50);
        assert_eq!(rc.stop, StopRule::DataPassBudget { value: 40.0 });
    }

    #[test]
    fn unknown_algorithm_is_named_in_the_error() {
        let bad = SAMPLE.replace("gt-sarah", "gt-banana");
        let cfg: ExperimentConfig = toml::from_str(&bad).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("gt-banana"));
    }
}
