//! The shared run loop.
//!
//! Per iteration `t`: (1) each agent refreshes or recursively updates its
//! local estimator `g_i^t` (full gradients at epoch starts, SARAH batch
//! differences otherwise); (2) trackers advance by
//! `y^t = W y^{t-1} + G^t - G^{t-1}`; (3) the metrics row for `x^t` is
//! recorded and stop rules are checked; (4) iterates advance by the mixed,
//! stepped update; (5) staggered runs apply the distance/length restart test.
//! Buffers rotate; nothing in the loop allocates.

use std::mem;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::clipping::{clip_in_place, gradient_mapping_norm_sq};
use crate::diagnostics::potential_constants;
use crate::error::{Error, Result};
use crate::network::MixingMatrix;
use crate::problems::Problem;
use crate::smoothness::{gamma_for_network, Ball, SmoothnessModel};
use crate::util::{derive_stream, unit_normal_vector};

use super::{
    AgentState, AlgorithmKind, MetricsRow, RadiusRule, RunConfig, RunObserver, StepRecord,
    StopRule, Termination, Trajectory,
};

const INIT_STREAM: u64 = 0x494E_4954;
const AGENT_STREAM: u64 = 0x4147_4E54;
const TOUT_STREAM: u64 = 0x544F_5554;

/// Run `config.algorithm` on `problem` over `mixing`. Deterministic in
/// `(config, problem)`; divergence ends the run with
/// [`Termination::Diverged`] and the finite metrics recorded so far.
pub fn run(
    problem: &dyn Problem,
    mixing: &MixingMatrix,
    config: &RunConfig,
) -> Result<Trajectory> {
    run_impl(problem, mixing, config, None)
}

pub(super) fn run_impl(
    problem: &dyn Problem,
    mixing: &MixingMatrix,
    cfg: &RunConfig,
    mut observer: Option<&mut dyn RunObserver>,
) -> Result<Trajectory> {
    cfg.validate(problem)?;
    let m = problem.num_agents();
    if mixing.agent_count() != m {
        return Err(Error::config(format!(
            "mixing matrix is {}x{} but the problem has {m} agents",
            mixing.agent_count(),
            mixing.agent_count()
        )));
    }
    let d = problem.dim();
    let w = mixing.matrix();
    let eta = mixing.eta();
    let c = mixing.c();
    let adaptive = cfg.algorithm.is_adaptive();

    let l_model = if adaptive {
        Some(SmoothnessModel::max_of(
            (0..m)
                .map(|i| problem.smoothness_model(i, cfg.smoothness))
                .collect(),
        )?)
    } else {
        None
    };
    let gamma = if adaptive { gamma_for_network(eta)? } else { 0.0 };
    let pot_params = if adaptive && cfg.record_potential {
        Some(potential_constants(eta, m)?)
    } else {
        None
    };
    let tau0 = cfg.tau[0];

    // Fixed radii are validated once against the feasibility inequalities;
    // derived rules satisfy them by construction.
    if adaptive {
        if let RadiusRule::Fixed {
            r0,
            delta,
            epoch_distance,
        } = &cfg.radii
        {
            match cfg.algorithm {
                AlgorithmKind::CgtvrStag => {
                    if (c + 1.0) * delta + epoch_distance > r0 * (1.0 + 1e-12) {
                        return Err(Error::config(format!(
                            "infeasible radii: (c+1)*delta + d = {} > r0 = {r0}",
                            (c + 1.0) * delta + epoch_distance
                        )));
                    }
                    if cfg.enforce_restart_precondition
                        && c * delta > epoch_distance / 2.0 * (1.0 + 1e-12)
                    {
                        return Err(Error::config(format!(
                            "restart precondition violated: c*delta = {} > d/2 = {}",
                            c * delta,
                            epoch_distance / 2.0
                        )));
                    }
                }
                AlgorithmKind::CgtvrSync => {
                    let cap = r0 / (c + tau0 as f64);
                    if *delta > cap * (1.0 + 1e-12) {
                        return Err(Error::config(format!(
                            "infeasible radii: delta = {delta} > r0/(c+tau) = {cap}"
                        )));
                    }
                }
                _ => {}
            }
        }
    }

    // --- state ------------------------------------------------------------
    let mut init_rng = derive_stream(cfg.init_seed.unwrap_or(cfg.seed), INIT_STREAM);
    let x0 = unit_normal_vector(&mut init_rng, d);
    let mut x: Vec<DVector<f64>> = vec![x0.clone(); m];
    let mut x_prev = x.clone();
    let mut x_next = vec![DVector::zeros(d); m];
    let mut y = vec![DVector::zeros(d); m];
    let mut y_next = vec![DVector::zeros(d); m];
    let mut g = vec![DVector::zeros(d); m];
    let mut g_next = vec![DVector::zeros(d); m];
    let mut step_buf = vec![DVector::zeros(d); m];

    let mut agents: Vec<AgentState> = (0..m)
        .map(|i| AgentState {
            beta: 0.0,
            l_local: 1.0,
            checkpoint: x0.clone(),
            flag: true,
            count: 0,
            restarts: 0,
            scheduled_refreshes: 0,
            epoch_start: 0,
            r0: 0.0,
            delta: 0.0,
            epoch_distance: 0.0,
            samples: 0,
            rng: derive_stream(cfg.seed, AGENT_STREAM.wrapping_add(i as u64)),
        })
        .collect();

    let total_n: f64 = (0..m).map(|i| problem.num_components(i) as f64).sum();
    let mut sync_beta = 0.0f64;
    let mut sync_delta = 0.0f64;
    let mut delta_max_seen = 0.0f64;

    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut beta_min_tr: Vec<f64> = Vec::new();
    let mut clip_delta_tr: Vec<f64> = Vec::new();
    let mut l_max_tr: Vec<f64> = Vec::new();
    let mut fresh = vec![false; m];
    let mut termination = Termination::MaxIterations;

    let mut x_bar = DVector::zeros(d);
    let mut grad_buf = DVector::zeros(d);

    'iterations: for t in 0..=cfg.max_iterations {
        // ---- phase 1: local estimators -----------------------------------
        fresh.iter_mut().for_each(|f| *f = false);
        match cfg.algorithm {
            AlgorithmKind::CgtvrStag => {
                for i in 0..m {
                    if agents[i].flag {
                        start_epoch_stag(
                            problem,
                            cfg,
                            l_model.as_ref().unwrap(),
                            gamma,
                            c,
                            t,
                            i,
                            &x,
                            &mut agents,
                            &mut g_next,
                            &mut delta_max_seen,
                        )?;
                        fresh[i] = true;
                    } else {
                        sarah_step(problem, cfg, i, &x, &x_prev, &mut agents, &mut g, &mut g_next);
                    }
                }
            }
            AlgorithmKind::CgtvrSync => {
                if t % tau0 == 0 {
                    start_epoch_sync(
                        problem,
                        cfg,
                        l_model.as_ref().unwrap(),
                        gamma,
                        c,
                        t,
                        &x,
                        &mut agents,
                        &mut g_next,
                        &mut sync_beta,
                        &mut sync_delta,
                        &mut delta_max_seen,
                    )?;
                    fresh.iter_mut().for_each(|f| *f = true);
                } else {
                    for i in 0..m {
                        sarah_step(problem, cfg, i, &x, &x_prev, &mut agents, &mut g, &mut g_next);
                    }
                }
            }
            AlgorithmKind::GtSarah | AlgorithmKind::DGet => {
                for i in 0..m {
                    if t % tau0 == 0 {
                        full_refresh(problem, t, i, &x, &mut agents, &mut g_next);
                        fresh[i] = true;
                    } else {
                        sarah_step(problem, cfg, i, &x, &x_prev, &mut agents, &mut g, &mut g_next);
                    }
                }
            }
            AlgorithmKind::GtVr => {
                for i in 0..m {
                    let restart = t == 0 || agents[i].rng.gen::<f64>() < cfg.restart_prob[i];
                    if restart {
                        full_refresh(problem, t, i, &x, &mut agents, &mut g_next);
                        agents[i].restarts += u64::from(t > 0);
                        fresh[i] = true;
                    } else {
                        sarah_step(problem, cfg, i, &x, &x_prev, &mut agents, &mut g, &mut g_next);
                    }
                }
            }
        }
        if g_next.iter().any(|v| !v.norm_squared().is_finite()) {
            termination = Termination::Diverged { t };
            break 'iterations;
        }

        // ---- phase 2: tracker update y^t = W y^{t-1} + G^t - G^{t-1} ------
        mix_into(w, &y, &mut y_next);
        for i in 0..m {
            y_next[i].axpy(1.0, &g_next[i], 1.0);
            y_next[i].axpy(-1.0, &g[i], 1.0);
        }

        // ---- metrics row for x^t ------------------------------------------
        x_bar.fill(0.0);
        for xi in &x {
            x_bar.axpy(1.0 / m as f64, xi, 1.0);
        }
        problem.global_gradient_into(&x_bar, &mut grad_buf);
        let grad_norm_sq = grad_buf.norm_squared();
        let objective = problem.objective(&x_bar);
        let x_dev_sq: f64 = x.iter().map(|xi| (xi - &x_bar).norm_squared()).sum();
        let consensus_error = (x_dev_sq / m as f64).sqrt();
        let data_pass = agents.iter().map(|a| a.samples as f64).sum::<f64>() / total_n;

        let (l_min, grad_map_sq, potential) = if adaptive {
            let l_min = agents.iter().map(|a| a.l_local).fold(f64::INFINITY, f64::min);
            let l_max = agents.iter().map(|a| a.l_local).fold(0.0f64, f64::max);
            let beta_min = cfg.theta * l_min;
            let delta_now = match cfg.algorithm {
                AlgorithmKind::CgtvrStag => {
                    agents.iter().map(|a| a.delta).fold(f64::INFINITY, f64::min)
                }
                _ => sync_delta,
            };
            let gmap = gradient_mapping_norm_sq(grad_norm_sq, beta_min, delta_now);
            let potential = pot_params.map(|p| {
                let mut y_bar = DVector::zeros(d);
                for yi in &y_next {
                    y_bar.axpy(1.0 / m as f64, yi, 1.0);
                }
                let y_dev_sq: f64 = y_next.iter().map(|yi| (yi - &y_bar).norm_squared()).sum();
                crate::diagnostics::potential_value(objective, x_dev_sq, y_dev_sq, l_min, &p)
            });
            beta_min_tr.push(beta_min);
            clip_delta_tr.push(delta_now);
            l_max_tr.push(l_max);
            (Some(l_min), gmap, potential)
        } else {
            (None, grad_norm_sq, None)
        };

        let row = MetricsRow {
            t,
            data_pass,
            grad_norm_sq,
            grad_map_sq,
            objective,
            consensus_error,
            l_min,
            restarts_total: agents.iter().map(|a| a.restarts).sum(),
            potential,
        };
        if !row.grad_norm_sq.is_finite() || !row.objective.is_finite() {
            termination = Termination::Diverged { t };
            break 'iterations;
        }
        rows.push(row);

        // ---- stop rules ----------------------------------------------------
        let last = rows.last().unwrap();
        let stop_hit = match cfg.stop {
            StopRule::GradMapThreshold { value } => {
                if last.grad_map_sq <= value {
                    Some(Termination::GradMapThreshold)
                } else {
                    None
                }
            }
            StopRule::DataPassBudget { value } => {
                if last.data_pass >= value {
                    Some(Termination::DataPassBudget)
                } else {
                    None
                }
            }
            StopRule::GradNormRelative { value } => {
                if last.grad_norm_sq <= value * rows[0].grad_norm_sq {
                    Some(Termination::GradNormTarget)
                } else {
                    None
                }
            }
            StopRule::None => None,
        };
        if let Some(reason) = stop_hit {
            termination = reason;
            break 'iterations;
        }
        if t == cfg.max_iterations {
            termination = Termination::MaxIterations;
            break 'iterations;
        }

        // ---- phase 3: iterate update ---------------------------------------
        match cfg.algorithm {
            AlgorithmKind::CgtvrStag | AlgorithmKind::CgtvrSync => {
                mix_into(w, &x, &mut x_next);
                for i in 0..m {
                    step_buf[i].copy_from(&y_next[i]);
                    let (beta, delta) = if cfg.algorithm == AlgorithmKind::CgtvrStag {
                        (agents[i].beta, agents[i].delta)
                    } else {
                        (sync_beta, sync_delta)
                    };
                    clip_in_place(&mut step_buf[i], beta, delta);
                    x_next[i].axpy(-1.0, &step_buf[i], 1.0);
                }
            }
            AlgorithmKind::GtSarah => {
                // x^{t+1} = W (x^t - alpha y^t)
                for i in 0..m {
                    step_buf[i].copy_from(&x[i]);
                    step_buf[i].axpy(-cfg.step_size, &y_next[i], 1.0);
                }
                mix_into(w, &step_buf, &mut x_next);
            }
            AlgorithmKind::DGet | AlgorithmKind::GtVr => {
                // x^{t+1} = W x^t - alpha y^t
                mix_into(w, &x, &mut x_next);
                for i in 0..m {
                    x_next[i].axpy(-cfg.step_size, &y_next[i], 1.0);
                }
            }
        }

        // ---- phase 4: staggered restart test -------------------------------
        if cfg.algorithm == AlgorithmKind::CgtvrStag {
            for (i, a) in agents.iter_mut().enumerate() {
                if a.count == cfg.tau[i] - 1 {
                    a.flag = true;
                    a.scheduled_refreshes += 1;
                } else if (&x_next[i] - &a.checkpoint).norm() >= a.epoch_distance {
                    a.flag = true;
                    a.restarts += 1;
                } else {
                    a.count += 1;
                }
            }
        }

        if x_next.iter().any(|v| !v.norm_squared().is_finite())
            || y_next.iter().any(|v| !v.norm_squared().is_finite())
        {
            termination = Termination::Diverged { t };
            break 'iterations;
        }

        // ---- observer -------------------------------------------------------
        if let Some(obs) = observer.as_deref_mut() {
            let record = StepRecord {
                t,
                x: &x,
                x_next: &x_next,
                y: &y_next,
                g: &g_next,
                agents: &agents,
                fresh_epoch: &fresh,
                x_bar: &x_bar,
                delta_max_seen,
                row: rows.last().unwrap(),
            };
            obs.observe(&record);
        }

        // ---- rotate buffers ---------------------------------------------------
        mem::swap(&mut x_prev, &mut x);
        mem::swap(&mut x, &mut x_next);
        mem::swap(&mut y, &mut y_next);
        mem::swap(&mut g, &mut g_next);
    }

    // --- trajectory ---------------------------------------------------------
    let mut tout_rng = derive_stream(cfg.seed, TOUT_STREAM);
    let (t_out, grad_map_sq_at_t_out) = if rows.is_empty() {
        (0, f64::NAN)
    } else {
        let t_out = tout_rng.gen_range(0..rows.len());
        (t_out, rows[t_out].grad_map_sq)
    };
    let min_grad_map_sq = rows
        .iter()
        .map(|r| r.grad_map_sq)
        .fold(f64::INFINITY, f64::min);
    Ok(Trajectory {
        algorithm: cfg.algorithm,
        seed: cfg.seed,
        theta: cfg.theta,
        eta,
        l_min0: rows.first().and_then(|r| r.l_min),
        x0,
        rows,
        termination,
        beta_min: beta_min_tr,
        clip_delta: clip_delta_tr,
        l_max: l_max_tr,
        per_agent_restarts: agents.iter().map(|a| a.restarts).collect(),
        per_agent_scheduled: agents.iter().map(|a| a.scheduled_refreshes).collect(),
        t_out,
        grad_map_sq_at_t_out,
        min_grad_map_sq,
    })
}

fn mix_into(w: &DMatrix<f64>, src: &[DVector<f64>], dst: &mut [DVector<f64>]) {
    let m = src.len();
    for i in 0..m {
        dst[i].fill(0.0);
        for j in 0..m {
            let wij = w[(i, j)];
            if wij != 0.0 {
                dst[i].axpy(wij, &src[j], 1.0);
            }
        }
    }
}

fn full_refresh(
    problem: &dyn Problem,
    t: usize,
    i: usize,
    x: &[DVector<f64>],
    agents: &mut [AgentState],
    g_next: &mut [DVector<f64>],
) {
    problem.local_gradient_into(i, &x[i], &mut g_next[i]);
    let a = &mut agents[i];
    a.epoch_start = t;
    a.samples += problem.num_components(i) as u64;
}

fn sarah_step(
    problem: &dyn Problem,
    cfg: &RunConfig,
    i: usize,
    x: &[DVector<f64>],
    x_prev: &[DVector<f64>],
    agents: &mut [AgentState],
    g: &mut [DVector<f64>],
    g_next: &mut [DVector<f64>],
) {
    let n = problem.num_components(i);
    let b = cfg.batch[i];
    let weight = 1.0 / b as f64;
    g_next[i].copy_from(&g[i]);
    for _ in 0..b {
        let j = agents[i].rng.gen_range(0..n);
        problem.accumulate_component_gradient(i, j, &x[i], weight, &mut g_next[i]);
        problem.accumulate_component_gradient(i, j, &x_prev[i], -weight, &mut g_next[i]);
    }
    agents[i].samples += 2 * b as u64;
}

/// Epoch radii for a checkpoint under the configured rule; staggered form
/// `(r0, delta = r0/(3(c+1)), d = 2 r0/3)`, which meets both feasibility
/// inequalities with room to spare.
fn stag_radii(
    cfg: &RunConfig,
    model: &SmoothnessModel,
    gamma: f64,
    c: f64,
    anchor: &DVector<f64>,
) -> Result<(f64, f64, f64)> {
    let r0 = match &cfg.radii {
        RadiusRule::Fixed {
            r0,
            delta,
            epoch_distance,
        } => return Ok((*r0, *delta, *epoch_distance)),
        RadiusRule::Proportional { coeff, floor } => (coeff * anchor.norm()).max(*floor),
        RadiusRule::Certified { safety, floor } => {
            let ball = Ball::new(anchor.clone(), 0.0)?;
            (safety * model.estimate_r0(&ball, gamma)?).max(*floor)
        }
    };
    Ok((r0, r0 / (3.0 * (c + 1.0)), 2.0 * r0 / 3.0))
}

#[allow(clippy::too_many_arguments)]
fn start_epoch_stag(
    problem: &dyn Problem,
    cfg: &RunConfig,
    model: &SmoothnessModel,
    gamma: f64,
    c: f64,
    t: usize,
    i: usize,
    x: &[DVector<f64>],
    agents: &mut [AgentState],
    g_next: &mut [DVector<f64>],
    delta_max_seen: &mut f64,
) -> Result<()> {
    problem.local_gradient_into(i, &x[i], &mut g_next[i]);
    let (r0, delta, dist) = stag_radii(cfg, model, gamma, c, &x[i])?;
    if cfg.enforce_restart_precondition && c * delta > dist / 2.0 * (1.0 + 1e-12) {
        return Err(Error::config(format!(
            "restart precondition violated at t={t}: c*delta = {} > d/2 = {}",
            c * delta,
            dist / 2.0
        )));
    }
    let l_local = model.eval(&Ball::new(x[i].clone(), r0)?)?;
    let a = &mut agents[i];
    a.checkpoint.copy_from(&x[i]);
    a.r0 = r0;
    a.delta = delta;
    a.epoch_distance = dist;
    a.l_local = l_local;
    a.beta = cfg.theta * l_local;
    a.flag = false;
    a.count = 0;
    a.epoch_start = t;
    a.samples += problem.num_components(i) as u64;
    *delta_max_seen = delta_max_seen.max(delta);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn start_epoch_sync(
    problem: &dyn Problem,
    cfg: &RunConfig,
    model: &SmoothnessModel,
    gamma: f64,
    c: f64,
    t: usize,
    x: &[DVector<f64>],
    agents: &mut [AgentState],
    g_next: &mut [DVector<f64>],
    sync_beta: &mut f64,
    sync_delta: &mut f64,
    delta_max_seen: &mut f64,
) -> Result<()> {
    let m = agents.len();
    let tau = cfg.tau[0] as f64;
    let (r0, delta) = match &cfg.radii {
        RadiusRule::Fixed { r0, delta, .. } => (*r0, *delta),
        RadiusRule::Proportional { coeff, floor } => {
            let r0 = x
                .iter()
                .map(|xi| (coeff * xi.norm()).max(*floor))
                .fold(f64::INFINITY, f64::min);
            (r0, r0 / (c + tau))
        }
        RadiusRule::Certified { safety, floor } => {
            let mut r0 = f64::INFINITY;
            for xi in x {
                let cert = model.estimate_r0(&Ball::new(xi.clone(), 0.0)?, gamma)?;
                r0 = r0.min((safety * cert).max(*floor));
            }
            (r0, r0 / (c + tau))
        }
    };
    let mut l_max = 0.0f64;
    for i in 0..m {
        problem.local_gradient_into(i, &x[i], &mut g_next[i]);
        let l = model.eval(&Ball::new(x[i].clone(), r0)?)?;
        let a = &mut agents[i];
        a.checkpoint.copy_from(&x[i]);
        a.l_local = l;
        a.r0 = r0;
        a.delta = delta;
        a.epoch_start = t;
        a.samples += problem.num_components(i) as u64;
        l_max = l_max.max(l);
    }
    // broadcast max-reduce: every agent uses the shared inverse stepsize
    *sync_beta = cfg.theta * l_max;
    *sync_delta = delta;
    *delta_max_seen = delta_max_seen.max(delta);
    for a in agents.iter_mut() {
        a.beta = *sync_beta;
    }
    Ok(())
}
