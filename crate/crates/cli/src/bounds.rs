//! The `check-bounds` driver: staggered runs with fixed radii repeated over
//! seeds, then every trajectory-level bound check, emitted as a JSON report
//! `{check, bound, observed, seeds, status}` per entry.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cgtvr::diagnostics::{
    clip_frequency_check, complexity_bound_check, compute_delta_f, escape_bound_check,
    harmonic_effective_l, potential_constants, potential_trend_check, restart_bound_check,
    BoundCheck, CheckStatus,
};
use cgtvr::error::{Error, Result};
use cgtvr::network::metropolis_weights;
use cgtvr::optimizers::{run, AlgorithmKind, RadiusRule, RunConfig, StopRule, Trajectory};
use cgtvr::problems::SmoothnessEstimator;
use cgtvr::smoothness::SmoothnessModel;

use crate::config::ExperimentConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundsReport {
    pub theta: f64,
    pub theta0: f64,
    pub delta_f: f64,
    pub harmonic_effective_l: f64,
    pub checks: Vec<BoundCheck>,
}

impl BoundsReport {
    pub fn all_applicable_pass(&self) -> bool {
        self.checks
            .iter()
            .all(|c| matches!(c.status, CheckStatus::Pass | CheckStatus::Inapplicable | CheckStatus::Info))
    }
}

pub fn check_bounds_config(config: &ExperimentConfig) -> Result<BoundsReport> {
    let bounds = config
        .bounds
        .as_ref()
        .ok_or_else(|| Error::config("config has no [bounds] section"))?;
    let problem = config.problem.build()?;
    let topo = &config.topologies[0];
    let mixing = metropolis_weights(&topo.build()?)?;
    let m = problem.num_agents();
    let params = potential_constants(mixing.eta(), m)?;
    let theta = if bounds.use_theta0 {
        params.theta0
    } else {
        bounds
            .theta
            .ok_or_else(|| Error::config("bounds.theta required when use_theta0 = false"))?
    };

    let mut base = RunConfig::paper(AlgorithmKind::CgtvrStag, problem.as_ref(), 0);
    base.theta = theta;
    base.smoothness = SmoothnessEstimator::Conservative;
    base.radii = RadiusRule::Fixed {
        r0: bounds.r0,
        delta: bounds.delta,
        epoch_distance: bounds.epoch_distance,
    };
    base.max_iterations = bounds.iterations;
    base.stop = StopRule::None;
    base.init_seed = Some(bounds.init_seed);
    base.record_potential = true;

    let trajectories: Vec<Trajectory> = (0..bounds.seeds as u64)
        .map(|s| {
            let mut cfg = base.clone();
            cfg.seed = s;
            run(problem.as_ref(), &mixing, &cfg)
        })
        .collect::<Result<_>>()?;

    let l_min0 = trajectories[0]
        .l_min0
        .ok_or_else(|| Error::Numeric("no smoothness recorded".into()))?;
    let delta_f = compute_delta_f(
        problem.as_ref(),
        &trajectories[0].x0,
        mixing.eta(),
        l_min0,
        problem.f_star_estimate(),
    )?;

    let mut checks = Vec::new();
    checks.extend(restart_bound_check(
        &trajectories,
        &base,
        mixing.c(),
        delta_f,
        params.theta0,
    ));
    checks.push(complexity_bound_check(
        &trajectories,
        theta,
        delta_f,
        params.theta0,
    ));
    checks.push(clip_frequency_check(&trajectories));
    checks.push(potential_trend_check(&trajectories));

    let model = SmoothnessModel::max_of(
        (0..m)
            .map(|i| problem.smoothness_model(i, SmoothnessEstimator::Conservative))
            .collect(),
    )?;
    checks.push(escape_bound_check(
        &trajectories,
        &model,
        delta_f,
        bounds.epsilon,
        bounds.confidence_p,
        m,
        bounds.delta,
        mixing.eta(),
        bounds.r0,
    )?);

    let l_mins: Vec<f64> = trajectories[0]
        .rows
        .iter()
        .filter_map(|r| r.l_min)
        .collect();
    let harmonic = harmonic_effective_l(&l_mins)?;

    Ok(BoundsReport {
        theta,
        theta0: params.theta0,
        delta_f,
        harmonic_effective_l: harmonic,
        checks,
    })
}

/// Parse the config, run the bound checks, and write `bounds_report.json`
/// into the output directory.
pub fn check_bounds(path: &Path) -> Result<BoundsReport> {
    let config = ExperimentConfig::from_path(path)?;
    let report = check_bounds_config(&config)?;
    let out_dir = config.resolved_output_dir();
    std::fs::create_dir_all(&out_dir)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Numeric(format!("report serialization: {e}")))?;
    std::fs::write(out_dir.join("bounds_report.json"), &json)?;
    Ok(report)
}
