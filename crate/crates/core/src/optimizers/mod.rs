//! Decentralized optimizers over one deterministic run loop.
//!
//! Two smoothness-adaptive methods — clipped gradient tracking with
//! staggered (`CgtvrStag`) or synchronous (`CgtvrSync`) variance reduction —
//! plus three fixed-stepsize baselines (`GtSarah`, `DGet`, `GtVr`). All five
//! share the tracker update `y^t = W y^{t-1} + g^t - g^{t-1}` from the
//! consensus initialization `y^{-1} = g^{-1} = 0`, which keeps the tracker
//! average equal to the estimator average at every iteration.
//!
//! The adaptive methods evaluate a shared set function `L = max_i L_i` on an
//! `r0`-ball around each epoch checkpoint, set the inverse stepsize
//! `beta = theta * L`, and clip every update to norm `delta`, so consensus
//! deviations stay bounded by `c * delta / 2` regardless of gradient
//! magnitudes.

mod engine;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::MixingMatrix;
use crate::problems::{Problem, SmoothnessEstimator};

pub use engine::run;

/// Hard cap on batch sizes accepted by [`sample_batch`].
pub const MAX_BATCH: usize = 10_000_000;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    CgtvrStag,
    CgtvrSync,
    GtSarah,
    DGet,
    GtVr,
}

impl AlgorithmKind {
    pub fn is_adaptive(&self) -> bool {
        matches!(self, AlgorithmKind::CgtvrStag | AlgorithmKind::CgtvrSync)
    }

    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmKind::CgtvrStag => "cgtvr-stag",
            AlgorithmKind::CgtvrSync => "cgtvr-sync",
            AlgorithmKind::GtSarah => "gt-sarah",
            AlgorithmKind::DGet => "d-get",
            AlgorithmKind::GtVr => "gt-vr",
        }
    }
}

/// How the per-epoch radii `(r0, delta, d)` are chosen.
///
/// * `Fixed`: explicit constants, validated against the feasibility
///   inequalities at initialization.
/// * `Proportional`: `r0 = max(coeff * ||x_c||, floor)`; `delta` and `d`
///   follow the ratio rules `delta = r0 / (3(c+1))`, `d = 2 r0 / 3`
///   (staggered) or `delta = r0 / (c + tau)` (synchronous).
/// * `Certified`: `r0 = max(safety * r_cert, floor)` where `r_cert` is the
///   radius certified by the smoothness model at the checkpoint for the
///   network's ratio bound `gamma`; same derived ratios. This is the default:
///   it keeps the cross-agent smoothness ratio inside `[1/gamma, gamma]`,
///   which a fixed proportionality coefficient cannot guarantee.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RadiusRule {
    Fixed {
        r0: f64,
        delta: f64,
        epoch_distance: f64,
    },
    Proportional {
        coeff: f64,
        floor: f64,
    },
    Certified {
        safety: f64,
        floor: f64,
    },
}

impl Default for RadiusRule {
    fn default() -> Self {
        RadiusRule::Certified {
            safety: 0.9,
            floor: 1e-3,
        }
    }
}

/// Stop condition checked after each recorded row (the iteration cap in
/// [`RunConfig::max_iterations`] always applies).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopRule {
    /// Stop once `||G(xbar)||^2 <= value`.
    GradMapThreshold { value: f64 },
    /// Stop once the cumulative data passes reach `value`.
    DataPassBudget { value: f64 },
    /// Stop once `||grad f(xbar)||^2 <= value * (its row-0 value)`.
    GradNormRelative { value: f64 },
    /// Run to the iteration cap.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: AlgorithmKind,
    /// Stepsize multiplier for the adaptive methods: `beta = theta * L`.
    pub theta: f64,
    /// Fixed stepsize for the baselines.
    pub step_size: f64,
    pub smoothness: SmoothnessEstimator,
    pub radii: RadiusRule,
    /// Per-agent maximum epoch lengths.
    pub tau: Vec<usize>,
    /// Per-agent batch sizes.
    pub batch: Vec<usize>,
    /// Per-agent restart probabilities (GT-VR only).
    pub restart_prob: Vec<f64>,
    pub max_iterations: usize,
    pub stop: StopRule,
    pub seed: u64,
    /// Separate seed for the consensus initialization, letting multi-seed
    /// expectation checks share one starting point. Defaults to `seed`.
    pub init_seed: Option<u64>,
    pub record_potential: bool,
    /// When set, epoch starts additionally require `c * delta <= d / 2`
    /// (the precondition of the early-restart bound).
    pub enforce_restart_precondition: bool,
}

impl RunConfig {
    /// Configuration following the published batch rules:
    /// `B_i = tau_i = ceil(sqrt(n_i))` for the staggered method, the uniform
    /// `B = tau = max_i ceil(sqrt(n_i))` for the synchronized ones, and
    /// `B_i = ceil(n_i^(2/3))`, `p_i = n_i^(-1/3)` for GT-VR.
    pub fn paper(algorithm: AlgorithmKind, problem: &dyn Problem, seed: u64) -> Self {
        let m = problem.num_agents();
        let sqrt_n: Vec<usize> = (0..m)
            .map(|i| (problem.num_components(i) as f64).sqrt().ceil() as usize)
            .collect();
        let uniform = *sqrt_n.iter().max().unwrap_or(&1);
        let (tau, batch, restart_prob) = match algorithm {
            AlgorithmKind::CgtvrStag => (sqrt_n.clone(), sqrt_n, vec![0.0; m]),
            AlgorithmKind::CgtvrSync | AlgorithmKind::GtSarah | AlgorithmKind::DGet => {
                (vec![uniform; m], vec![uniform; m], vec![0.0; m])
            }
            AlgorithmKind::GtVr => {
                let batch: Vec<usize> = (0..m)
                    .map(|i| (problem.num_components(i) as f64).powf(2.0 / 3.0).ceil() as usize)
                    .collect();
                let p: Vec<f64> = (0..m)
                    .map(|i| (problem.num_components(i) as f64).powf(-1.0 / 3.0))
                    .collect();
                (vec![usize::MAX; m], batch, p)
            }
        };
        RunConfig {
            algorithm,
            theta: 10.0,
            step_size: 1e-2,
            smoothness: SmoothnessEstimator::Approximate,
            radii: RadiusRule::default(),
            tau,
            batch,
            restart_prob,
            max_iterations: 1000,
            stop: StopRule::None,
            seed,
            init_seed: None,
            record_potential: true,
            enforce_restart_precondition: false,
        }
    }

    pub fn validate(&self, problem: &dyn Problem) -> Result<()> {
        let m = problem.num_agents();
        if self.tau.len() != m || self.batch.len() != m || self.restart_prob.len() != m {
            return Err(Error::config(
                "tau, batch, and restart_prob must have one entry per agent",
            ));
        }
        if self.algorithm.is_adaptive() && !(self.theta > 0.0) {
            return Err(Error::config("theta must be positive"));
        }
        if !self.algorithm.is_adaptive() && !(self.step_size > 0.0) {
            return Err(Error::config("step_size must be positive"));
        }
        for (i, &b) in self.batch.iter().enumerate() {
            if b == 0 || b > MAX_BATCH {
                return Err(Error::config(format!(
                    "batch size for agent {i} must be in 1..={MAX_BATCH}"
                )));
            }
        }
        if self.algorithm != AlgorithmKind::GtVr {
            if self.tau.iter().any(|&t| t == 0) {
                return Err(Error::config("epoch lengths must be at least 1"));
            }
        } else {
            for (i, &p) in self.restart_prob.iter().enumerate() {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::config(format!(
                        "restart probability for agent {i} must lie in (0, 1]"
                    )));
                }
            }
        }
        if matches!(
            self.algorithm,
            AlgorithmKind::CgtvrSync | AlgorithmKind::GtSarah | AlgorithmKind::DGet
        ) && self.tau.windows(2).any(|w| w[0] != w[1])
        {
            return Err(Error::config(
                "synchronized epoch schedules require a uniform tau",
            ));
        }
        if let RadiusRule::Fixed {
            r0,
            delta,
            epoch_distance,
        } = &self.radii
        {
            if !(*r0 > 0.0 && *delta > 0.0) {
                return Err(Error::config("fixed radii must be positive"));
            }
            if self.algorithm == AlgorithmKind::CgtvrStag && !(*epoch_distance > 0.0) {
                return Err(Error::config("epoch distance must be positive"));
            }
        }
        if let RadiusRule::Proportional { coeff, floor } | RadiusRule::Certified {
            safety: coeff,
            floor,
        } = &self.radii
        {
            if !(*coeff > 0.0 && *floor > 0.0) {
                return Err(Error::config("radius rule constants must be positive"));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Per-agent state
// ---------------------------------------------------------------------------

/// Controller state of one agent. The iterate/tracker/estimator vectors live
/// in the stacked run buffers and are exposed through [`StepRecord`].
#[derive(Clone, Debug)]
pub struct AgentState {
    /// Inverse stepsize `beta_i = theta * L_i` of the current epoch.
    pub beta: f64,
    /// Local smoothness constant `L_i` of the current epoch.
    pub l_local: f64,
    /// Epoch checkpoint `x_i^c`.
    pub checkpoint: DVector<f64>,
    /// Epoch-restart signal.
    pub flag: bool,
    /// Iteration counter within the epoch (always `< tau_i`).
    pub count: usize,
    /// Early (distance-triggered) restarts so far.
    pub restarts: u64,
    /// Scheduled (`tau`-expiry) refreshes so far, counted separately.
    pub scheduled_refreshes: u64,
    /// First time step of the current epoch, `l(i, t)`.
    pub epoch_start: usize,
    /// Radii in force for the current epoch.
    pub r0: f64,
    pub delta: f64,
    pub epoch_distance: f64,
    /// Component-gradient evaluations consumed so far.
    pub samples: u64,
    pub(crate) rng: ChaCha8Rng,
}

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

/// One per-iteration record; exactly the CSV schema.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub t: usize,
    pub data_pass: f64,
    pub grad_norm_sq: f64,
    pub grad_map_sq: f64,
    pub objective: f64,
    pub consensus_error: f64,
    pub l_min: Option<f64>,
    pub restarts_total: u64,
    pub potential: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIterations,
    GradMapThreshold,
    GradNormTarget,
    DataPassBudget,
    Diverged { t: usize },
}

/// Full recorded run: metrics rows plus the side channels the diagnostics
/// need (per-row `beta_min`/`delta`/`L_max`, restart tallies, the shared
/// initial point, and the randomly drawn report index `t_out`).
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub algorithm: AlgorithmKind,
    pub seed: u64,
    pub theta: f64,
    pub eta: f64,
    pub rows: Vec<MetricsRow>,
    pub termination: Termination,
    pub x0: DVector<f64>,
    pub l_min0: Option<f64>,
    /// Per-row `theta * L_min^t` (empty for baselines).
    pub beta_min: Vec<f64>,
    /// Per-row clipping threshold in force (empty for baselines).
    pub clip_delta: Vec<f64>,
    /// Per-row `max_i L_i^t` (empty for baselines).
    pub l_max: Vec<f64>,
    pub per_agent_restarts: Vec<u64>,
    pub per_agent_scheduled: Vec<u64>,
    /// Uniformly drawn report iteration and the value there.
    pub t_out: usize,
    pub grad_map_sq_at_t_out: f64,
    pub min_grad_map_sq: f64,
}

impl Trajectory {
    /// First data pass at which the squared gradient norm drops to `target`.
    pub fn data_passes_to_grad_norm(&self, target: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.grad_norm_sq <= target)
            .map(|r| r.data_pass)
    }

    pub fn final_row(&self) -> &MetricsRow {
        self.rows.last().expect("trajectory has at least one row")
    }
}

// ---------------------------------------------------------------------------
// Observer
// ---------------------------------------------------------------------------

/// Everything an invariant monitor can see after one full iteration.
pub struct StepRecord<'a> {
    pub t: usize,
    /// Iterates entering the step, `x^t`.
    pub x: &'a [DVector<f64>],
    /// Iterates after the clipped update, `x^{t+1}`.
    pub x_next: &'a [DVector<f64>],
    /// Trackers `y^t`.
    pub y: &'a [DVector<f64>],
    /// Estimators `g^t`.
    pub g: &'a [DVector<f64>],
    /// Agent controllers after the restart test.
    pub agents: &'a [AgentState],
    /// Which agents took a full gradient in this step.
    pub fresh_epoch: &'a [bool],
    /// Mean iterate of `x^t`.
    pub x_bar: &'a DVector<f64>,
    /// Largest clipping threshold active at any point so far.
    pub delta_max_seen: f64,
    pub row: &'a MetricsRow,
}

pub trait RunObserver {
    fn observe(&mut self, record: &StepRecord<'_>);
}

/// Entry point shared by all algorithms; see [`engine::run`].
pub fn run_with_observer(
    problem: &dyn Problem,
    mixing: &MixingMatrix,
    config: &RunConfig,
    observer: Option<&mut dyn RunObserver>,
) -> Result<Trajectory> {
    engine::run_impl(problem, mixing, config, observer)
}

// ---------------------------------------------------------------------------
// Batch sampling
// ---------------------------------------------------------------------------

/// `batch_size` indices drawn uniformly i.i.d. with replacement from
/// `0..n_components`.
pub fn sample_batch(
    rng: &mut ChaCha8Rng,
    n_components: usize,
    batch_size: usize,
) -> Result<Vec<usize>> {
    if batch_size == 0 || batch_size > MAX_BATCH {
        return Err(Error::invalid(format!(
            "batch size must be in 1..={MAX_BATCH}"
        )));
    }
    if n_components == 0 {
        return Err(Error::invalid("cannot sample from zero components"));
    }
    Ok((0..batch_size)
        .map(|_| rng.gen_range(0..n_components))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::derive_stream;

    #[test]
    fn sample_batch_single_component() {
        let mut rng = derive_stream(1, 0);
        let idx = sample_batch(&mut rng, 1, 20).unwrap();
        assert!(idx.iter().all(|&i| i == 0));
    }

    #[test]
    fn sample_batch_deterministic() {
        let mut a = derive_stream(5, 9);
        let mut b = derive_stream(5, 9);
        assert_eq!(
            sample_batch(&mut a, 17, 64).unwrap(),
            sample_batch(&mut b, 17, 64).unwrap()
        );
    }

    #[test]
    fn sample_batch_rejects_oversize() {
        let mut rng = derive_stream(2, 0);
        assert!(sample_batch(&mut rng, 4, MAX_BATCH + 1).is_err());
        assert!(sample_batch(&mut rng, 4, 0).is_err());
    }

    #[test]
    fn sample_batch_uniformity_chi_square() {
        // chi-square statistic over 1e5 draws stays within 3 sigma of its
        // mean for this fixed stream
        let n = 10usize;
        let draws = 100_000usize;
        let mut rng = derive_stream(1234, 42);
        let idx = sample_batch(&mut rng, n, draws).unwrap();
        let mut counts = vec![0f64; n];
        for i in idx {
            counts[i] += 1.0;
        }
        let expected = draws as f64 / n as f64;
        let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        let dof = (n - 1) as f64;
        let bound = dof + 3.0 * (2.0 * dof).sqrt();
        assert!(stat <= bound, "chi-square statistic {stat} above {bound}");
    }

    #[test]
    fn paper_defaults_follow_batch_rules() {
        let p = crate::problems::QuadraticInverse::generate(4, 3, 256, 0.0, 1).unwrap();
        let stag = RunConfig::paper(AlgorithmKind::CgtvrStag, &p, 0);
        assert_eq!(stag.tau, vec![16, 16, 16]);
        assert_eq!(stag.batch, vec![16, 16, 16]);

        let vr = RunConfig::paper(AlgorithmKind::GtVr, &p, 0);
        assert_eq!(vr.batch, vec![41, 41, 41]); // ceil(256^(2/3)) = ceil(40.3)
        assert!((vr.restart_prob[0] - 256f64.powf(-1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn validate_catches_bad_configs() {
        let p = crate::problems::QuadraticInverse::generate(4, 2, 9, 0.0, 1).unwrap();
        let mut cfg = RunConfig::paper(AlgorithmKind::CgtvrStag, &p, 0);
        cfg.theta = 0.0;
        assert!(cfg.validate(&p).is_err());

        let mut cfg = RunConfig::paper(AlgorithmKind::CgtvrSync, &p, 0);
        cfg.tau = vec![3, 4];
        assert!(cfg.validate(&p).is_err());

        let mut cfg = RunConfig::paper(AlgorithmKind::GtVr, &p, 0);
        cfg.restart_prob = vec![0.0, 0.5];
        assert!(cfg.validate(&p).is_err());
    }
}
