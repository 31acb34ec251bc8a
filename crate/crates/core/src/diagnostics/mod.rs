//! Theoretical quantities and empirical bound checks over recorded
//! trajectories: the potential function and its coefficients, the initial
//! potential-gap bound, the early-restart and complexity bound checks, the
//! clip-frequency bound, the escape radius, and the harmonic-mean effective
//! smoothness.
//!
//! Expectations are estimated by seed-averaging; every check reports
//! `{check, bound, observed, seeds, status}`. Checks whose preconditions
//! (e.g. `theta >= theta0`) fail are marked inapplicable rather than failed.

mod monitor;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{RadiusRule, RunConfig, Trajectory};
use crate::problems::Problem;
use crate::smoothness::{Ball, SmoothnessModel};

pub use monitor::InvariantMonitor;

// ---------------------------------------------------------------------------
// Potential function
// ---------------------------------------------------------------------------

/// Coefficients of the descent potential
/// `P_t = f(xbar) + alpha1 L_min ||x - 1 xbar||_F^2 + alpha2 ||y - 1 ybar||_F^2 / L_min`
/// and the smallest stepsize multiplier `theta0` for which the telescoped
/// descent holds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub theta0: f64,
    pub eta: f64,
    pub m: usize,
}

/// `alpha1 = 14/((1-eta) m) + 600/((1-eta)^3 m)`,
/// `alpha2 = 5/(2 (1-eta) m)`,
/// `theta0 = 28 + 1424/(1-eta)^2 + 9600/(1-eta)^4`.
///
/// `eta = 0` (exact averaging) is the continuous limit and is accepted.
pub fn potential_constants(eta: f64, m: usize) -> Result<PotentialParams> {
    if !(eta >= 0.0 && eta < 1.0) {
        return Err(Error::invalid(format!(
            "potential constants need eta in [0, 1), got {eta}"
        )));
    }
    if m < 1 {
        return Err(Error::invalid("potential constants need m >= 1"));
    }
    let z = 1.0 - eta;
    let mf = m as f64;
    Ok(PotentialParams {
        alpha1: 14.0 / (z * mf) + 600.0 / (z.powi(3) * mf),
        alpha2: 5.0 / (2.0 * z * mf),
        theta0: 28.0 + 1424.0 / z.powi(2) + 9600.0 / z.powi(4),
        eta,
        m,
    })
}

/// Pure arithmetic core shared with the run loop.
pub fn potential_value(
    objective_at_mean: f64,
    x_dev_sq: f64,
    y_dev_sq: f64,
    l_min: f64,
    params: &PotentialParams,
) -> f64 {
    objective_at_mean + params.alpha1 * l_min * x_dev_sq + params.alpha2 * y_dev_sq / l_min
}

/// Single-sample potential realization from stacked iterates and trackers.
pub fn compute_potential(
    objective_at_mean: f64,
    x: &[DVector<f64>],
    y: &[DVector<f64>],
    params: &PotentialParams,
    l_min: f64,
) -> f64 {
    let m = x.len() as f64;
    let mut x_bar = DVector::zeros(x[0].len());
    let mut y_bar = DVector::zeros(y[0].len());
    for xi in x {
        x_bar.axpy(1.0 / m, xi, 1.0);
    }
    for yi in y {
        y_bar.axpy(1.0 / m, yi, 1.0);
    }
    let x_dev: f64 = x.iter().map(|xi| (xi - &x_bar).norm_squared()).sum();
    let y_dev: f64 = y.iter().map(|yi| (yi - &y_bar).norm_squared()).sum();
    potential_value(objective_at_mean, x_dev, y_dev, l_min, params)
}

/// Upper bound on the total potential drop:
/// `Delta_f = f(x0) - f* + 5 sum_i ||grad f(x0) - grad f_i(x0)||^2 / (2 m (1-eta) L_min^0)`.
pub fn compute_delta_f(
    problem: &dyn Problem,
    x0: &DVector<f64>,
    eta: f64,
    l_min0: f64,
    f_star: f64,
) -> Result<f64> {
    if !(l_min0 >= 1.0) {
        return Err(Error::invalid("Delta_f needs L_min^0 >= 1"));
    }
    if !(eta >= 0.0 && eta < 1.0) {
        return Err(Error::invalid("Delta_f needs eta in [0, 1)"));
    }
    let m = problem.num_agents();
    let mut global = DVector::zeros(x0.len());
    problem.global_gradient_into(x0, &mut global);
    let mut local = DVector::zeros(x0.len());
    let mut heterogeneity = 0.0;
    for i in 0..m {
        problem.local_gradient_into(i, x0, &mut local);
        heterogeneity += (&global - &local).norm_squared();
    }
    Ok(problem.objective(x0) - f_star
        + 5.0 * heterogeneity / (2.0 * m as f64 * (1.0 - eta) * l_min0))
}

/// Harmonic mean `T / sum_t 1/L_min^t` of a trajectory of local constants.
pub fn harmonic_effective_l(l_min_trajectory: &[f64]) -> Result<f64> {
    if l_min_trajectory.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    if l_min_trajectory.iter().any(|&l| !(l >= 1.0)) {
        return Err(Error::invalid("local constants must be >= 1"));
    }
    let inv_sum: f64 = l_min_trajectory.iter().map(|l| 1.0 / l).sum();
    Ok(l_min_trajectory.len() as f64 / inv_sum)
}

/// Radius of the ball around the initial mean iterate that contains every
/// local iterate before the first `epsilon`-stationary time, with
/// probability `1 - p`:
/// `R = 8 Delta_f / (sqrt(eps) p) + sqrt(2m) delta / (1 - eta) + r0`.
pub fn escape_radius(
    delta_f: f64,
    epsilon: f64,
    p: f64,
    m: usize,
    delta: f64,
    eta: f64,
    r0: f64,
) -> f64 {
    assert!(epsilon > 0.0 && epsilon <= 1.0 && p > 0.0 && p <= 1.0);
    8.0 * delta_f / (epsilon.sqrt() * p) + (2.0 * m as f64).sqrt() * delta / (1.0 - eta) + r0
}

// ---------------------------------------------------------------------------
// Bound-check reports
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inapplicable,
    Info,
}

/// One empirical bound check: the theoretical bound, the observed value, the
/// number of seeds it was estimated from, and the verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundCheck {
    pub check: String,
    pub bound: f64,
    pub observed: f64,
    pub seeds: usize,
    pub status: CheckStatus,
}

impl BoundCheck {
    fn verdict(check: impl Into<String>, bound: f64, observed: f64, seeds: usize) -> Self {
        BoundCheck {
            check: check.into(),
            bound,
            observed,
            seeds,
            status: if observed <= bound {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
        }
    }
}

/// Early-restart bound: the per-agent mean count of distance-triggered
/// restarts must not exceed `16 Delta_f tau_i / (theta d^2)`. Requires fixed
/// radii with `c delta <= d / 2` and `theta >= theta0`; otherwise the check
/// is inapplicable.
pub fn restart_bound_check(
    trajectories: &[Trajectory],
    config: &RunConfig,
    c: f64,
    delta_f: f64,
    theta0: f64,
) -> Vec<BoundCheck> {
    let seeds = trajectories.len();
    let m = config.tau.len();
    let inapplicable = |why: &str| {
        vec![BoundCheck {
            check: format!("restart_bound ({why})"),
            bound: f64::NAN,
            observed: f64::NAN,
            seeds,
            status: CheckStatus::Inapplicable,
        }]
    };
    let (delta, dist) = match &config.radii {
        RadiusRule::Fixed {
            delta,
            epoch_distance,
            ..
        } => (*delta, *epoch_distance),
        _ => return inapplicable("needs fixed radii"),
    };
    if config.theta < theta0 {
        return inapplicable("theta below theta0");
    }
    if c * delta > dist / 2.0 {
        return inapplicable("c*delta > d/2");
    }
    (0..m)
        .map(|i| {
            let mean = trajectories
                .iter()
                .map(|t| t.per_agent_restarts[i] as f64)
                .sum::<f64>()
                / seeds as f64;
            let bound = 16.0 * delta_f * config.tau[i] as f64 / (config.theta * dist * dist);
            BoundCheck::verdict(format!("restart_bound agent {i}"), bound, mean, seeds)
        })
        .collect()
}

/// Complexity-bound consequence: along every trajectory and for every prefix
/// length `T`, `min_{t<T} ||G||^2 <= 32 theta^2 Lbar Delta_f / ((theta-2) T)`
/// with `Lbar` the largest observed `L_min^t`. Reported informationally when
/// `theta < theta0` (the descent lemma only covers `theta >= theta0`).
pub fn complexity_bound_check(
    trajectories: &[Trajectory],
    theta: f64,
    delta_f: f64,
    theta0: f64,
) -> BoundCheck {
    let seeds = trajectories.len();
    let l_bar = trajectories
        .iter()
        .flat_map(|t| t.rows.iter().filter_map(|r| r.l_min))
        .fold(1.0f64, f64::max);
    let mut worst_ratio = 0.0f64;
    for traj in trajectories {
        let mut running_min = f64::INFINITY;
        for (idx, row) in traj.rows.iter().enumerate() {
            running_min = running_min.min(row.grad_map_sq);
            let t_len = (idx + 1) as f64;
            let bound = 32.0 * theta * theta * l_bar * delta_f / ((theta - 2.0) * t_len);
            worst_ratio = worst_ratio.max(running_min / bound);
        }
    }
    let mut check = BoundCheck::verdict("complexity_bound", 1.0, worst_ratio, seeds);
    if theta < theta0 && check.status == CheckStatus::Fail {
        check.status = CheckStatus::Info;
    }
    check
}

/// Clip-activity frequency: the fraction of iterations where the mean
/// gradient was clipped is at most `mean ||T||^2 / delta^2` plus three
/// standard errors. Clip activity is read off the rows: the mapping is
/// strictly below the gradient norm exactly on the clipped branch.
pub fn clip_frequency_check(trajectories: &[Trajectory]) -> BoundCheck {
    let seeds = trajectories.len();
    let mut active = 0usize;
    let mut total = 0usize;
    let mut ratio_sum = 0.0f64;
    for traj in trajectories {
        for (idx, row) in traj.rows.iter().enumerate() {
            let beta_min = traj.beta_min.get(idx).copied().unwrap_or(f64::NAN);
            let delta = traj.clip_delta.get(idx).copied().unwrap_or(f64::NAN);
            if !beta_min.is_finite() || !delta.is_finite() {
                continue;
            }
            total += 1;
            if row.grad_map_sq < row.grad_norm_sq * (1.0 - 1e-12) {
                active += 1;
            }
            // ||T||^2 = ||G||^2 / beta_min^2; bound term ||T||^2 / delta^2
            ratio_sum += row.grad_map_sq / (beta_min * beta_min * delta * delta);
        }
    }
    if total == 0 {
        return BoundCheck {
            check: "clip_frequency (no adaptive rows)".into(),
            bound: f64::NAN,
            observed: f64::NAN,
            seeds,
            status: CheckStatus::Inapplicable,
        };
    }
    let freq = active as f64 / total as f64;
    let sigma = (freq * (1.0 - freq) / total as f64).sqrt();
    let bound = ratio_sum / total as f64 + 3.0 * sigma;
    BoundCheck::verdict("clip_frequency", bound, freq, seeds)
}

/// Escape-radius monitor: before each trajectory first reaches an
/// `epsilon`-small squared gradient mapping, every evaluated local constant
/// stays below the model value on the ball `B(x0, R_{eps,p})`.
#[allow(clippy::too_many_arguments)]
pub fn escape_bound_check(
    trajectories: &[Trajectory],
    model: &SmoothnessModel,
    delta_f: f64,
    epsilon: f64,
    p: f64,
    m: usize,
    delta: f64,
    eta: f64,
    r0: f64,
) -> Result<BoundCheck> {
    let radius = escape_radius(delta_f, epsilon, p, m, delta, eta, r0);
    let seeds = trajectories.len();
    let mut worst = 0.0f64;
    let mut cap = f64::NAN;
    for traj in trajectories {
        let ball = Ball::new(traj.x0.clone(), radius)?;
        cap = model.eval(&ball)?;
        for (idx, row) in traj.rows.iter().enumerate() {
            if row.grad_map_sq <= epsilon {
                break;
            }
            if let Some(&lmax) = traj.l_max.get(idx) {
                worst = worst.max(lmax);
            }
        }
    }
    Ok(BoundCheck::verdict("escape_radius", cap, worst, seeds))
}

/// Seed-averaged potential trend: the mean trajectory must be non-increasing
/// up to slack (at most 2% of steps may increase, each by at most
/// `1e-6 * P_0`). Requires aligned rows with potentials recorded.
pub fn potential_trend_check(trajectories: &[Trajectory]) -> BoundCheck {
    let seeds = trajectories.len();
    let len = trajectories
        .iter()
        .map(|t| t.rows.len())
        .min()
        .unwrap_or(0);
    if len < 2
        || trajectories
            .iter()
            .any(|t| t.rows.iter().take(len).any(|r| r.potential.is_none()))
    {
        return BoundCheck {
            check: "potential_trend (no potentials recorded)".into(),
            bound: f64::NAN,
            observed: f64::NAN,
            seeds,
            status: CheckStatus::Inapplicable,
        };
    }
    let mean_at = |t: usize| -> f64 {
        trajectories
            .iter()
            .map(|tr| tr.rows[t].potential.unwrap())
            .sum::<f64>()
            / seeds as f64
    };
    let p0 = mean_at(0);
    let tol = 1e-6 * p0.abs().max(1.0);
    let mut increases = 0usize;
    let mut prev = p0;
    for t in 1..len {
        let cur = mean_at(t);
        if cur > prev + tol {
            increases += 1;
        }
        prev = cur;
    }
    let frac = increases as f64 / (len - 1) as f64;
    BoundCheck::verdict("potential_trend", 0.02, frac, seeds)
}
