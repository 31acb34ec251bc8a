//! Per-iteration invariant monitor.
//!
//! Attached as a [`RunObserver`], it asserts every runtime-verifiable bound
//! of the clipped-update analysis at each step:
//!
//! * tracker identity `mean(y^t) = mean(g^t)` (coordinate-wise, 1e-10),
//! * mean-iterate step bound `||xbar^{t+1} - xbar^t|| <= delta`,
//! * consensus bound `||x^t - 1 xbar^t||_F <= c delta / 2`,
//! * pairwise iterate bound `||x_i^t - x_j^{t'}|| <= (c + |t - t'|) delta`
//!   (spot-checked on sampled lags),
//! * checkpoint proximity `||x_i^c - x_j^c|| <= c delta + d` (staggered),
//! * within-epoch containment around the checkpoint (staggered),
//! * per-epoch radius bound `||x_i^{s tau} - x_i^{s tau + k}|| <= (c + k) delta`
//!   (synchronous),
//! * smoothness-ratio guard `1/gamma <= L_j / L_i <= gamma`,
//! * estimator exactness and `beta = theta * L` at epoch starts.
//!
//! Radii may vary per epoch under the adaptive rules, so the delta-dependent
//! bounds use the running maximum of all thresholds in force so far, which
//! is the value the telescoped contraction argument admits.

use std::collections::VecDeque;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::optimizers::{AlgorithmKind, RunConfig, RunObserver, StepRecord};
use crate::problems::Problem;
use crate::smoothness::gamma_for_network;
use crate::util::derive_stream;

/// Absolute slack added to every analytic bound.
const BOUND_TOL: f64 = 1e-9;
/// Tracker identity tolerance (coordinate-wise).
const TRACKER_TOL: f64 = 1e-10;
/// Tolerance for estimator exactness at epoch starts.
const EXACT_TOL: f64 = 1e-12;
/// How many recent iterate stacks to keep for time-lagged pair checks.
const HISTORY: usize = 48;
/// Lagged pairs sampled per iteration.
const PAIR_SAMPLES: usize = 4;

pub struct InvariantMonitor<'p> {
    problem: &'p dyn Problem,
    kind: AlgorithmKind,
    theta: f64,
    c: f64,
    gamma: f64,
    check_ratio_guard: bool,
    violations: Vec<String>,
    checks: u64,
    prev_xbar: Option<DVector<f64>>,
    history: VecDeque<(usize, Vec<DVector<f64>>)>,
    epoch_snapshot: Option<(usize, Vec<DVector<f64>>)>,
    last_restarts: Vec<u64>,
    rng: ChaCha8Rng,
    grad_scratch: DVector<f64>,
}

impl<'p> InvariantMonitor<'p> {
    pub fn new(
        problem: &'p dyn Problem,
        config: &RunConfig,
        eta: f64,
        c: f64,
    ) -> crate::Result<Self> {
        let gamma = gamma_for_network(eta)?;
        Ok(InvariantMonitor {
            problem,
            kind: config.algorithm,
            theta: config.theta,
            c,
            gamma,
            check_ratio_guard: config.algorithm.is_adaptive(),
            violations: Vec::new(),
            checks: 0,
            prev_xbar: None,
            history: VecDeque::new(),
            epoch_snapshot: None,
            last_restarts: vec![0; problem.num_agents()],
            rng: derive_stream(config.seed, 0x4D4F_4E49),
            grad_scratch: DVector::zeros(problem.dim()),
        })
    }

    /// Disable the cross-agent smoothness-ratio check (it is only guaranteed
    /// under the feasibility inequalities).
    pub fn without_ratio_guard(mut self) -> Self {
        self.check_ratio_guard = false;
        self
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub fn checks_performed(&self) -> u64 {
        self.checks
    }

    pub fn assert_clean(&self) {
        assert!(
            self.violations.is_empty(),
            "{} invariant violations in {} checks; first: {}",
            self.violations.len(),
            self.checks,
            self.violations[0]
        );
    }

    fn record(&mut self, message: String) {
        if self.violations.len() < 32 {
            self.violations.push(message);
        }
    }

    fn check(&mut self, ok: bool, message: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            let msg = message();
            self.record(msg);
        }
    }
}

impl RunObserver for InvariantMonitor<'_> {
    fn observe(&mut self, rec: &StepRecord<'_>) {
        let m = rec.x.len();
        let mf = m as f64;
        let delta_max = rec.delta_max_seen;
        let t = rec.t;

        // tracker identity: mean(y) == mean(g), coordinate-wise
        {
            let d = rec.y[0].len();
            let mut worst = 0.0f64;
            for k in 0..d {
                let ybar: f64 = rec.y.iter().map(|v| v[k]).sum::<f64>() / mf;
                let gbar: f64 = rec.g.iter().map(|v| v[k]).sum::<f64>() / mf;
                worst = worst.max((ybar - gbar).abs());
            }
            self.check(worst <= TRACKER_TOL, || {
                format!("t={t}: tracker identity off by {worst:.3e}")
            });
        }

        let adaptive = self.kind.is_adaptive();
        if adaptive {
            // mean-iterate step bound: the step is an average of clipped
            // updates, each bounded by its agent's current threshold
            let delta_now = rec
                .agents
                .iter()
                .map(|a| a.delta)
                .fold(0.0f64, f64::max);
            let mut next_bar = DVector::zeros(rec.x_bar.len());
            for xi in rec.x_next {
                next_bar.axpy(1.0 / mf, xi, 1.0);
            }
            let step = (&next_bar - rec.x_bar).norm();
            self.check(step <= delta_now + BOUND_TOL, || {
                format!("t={t}: mean step {step:.3e} exceeds delta {delta_now:.3e}")
            });

            // consensus bound with the running-max threshold
            let dev_sq: f64 = rec.x.iter().map(|xi| (xi - rec.x_bar).norm_squared()).sum();
            let dev = dev_sq.sqrt();
            let cap = self.c * delta_max / 2.0 + BOUND_TOL;
            self.check(dev <= cap, || {
                format!("t={t}: consensus deviation {dev:.3e} exceeds c*delta/2 = {cap:.3e}")
            });

            // pairwise iterate bound against sampled history lags
            for _ in 0..PAIR_SAMPLES {
                if self.history.is_empty() {
                    break;
                }
                let hist_idx = self.rng.gen_range(0..self.history.len());
                let i = self.rng.gen_range(0..m);
                let j = self.rng.gen_range(0..m);
                let (t_old, ref stack) = self.history[hist_idx];
                let lag = (t - t_old) as f64;
                let dist = (&rec.x[i] - &stack[j]).norm();
                let bound = (self.c + lag) * delta_max + BOUND_TOL;
                self.check(dist <= bound, || {
                    format!(
                        "t={t}: ||x_{i}^{t} - x_{j}^{t_old}|| = {dist:.3e} exceeds (c+{lag})delta = {bound:.3e}"
                    )
                });
            }
        }

        match self.kind {
            AlgorithmKind::CgtvrStag => {
                // checkpoint proximity: c delta + d across every agent pair
                for i in 0..m {
                    for j in (i + 1)..m {
                        let dist =
                            (&rec.agents[i].checkpoint - &rec.agents[j].checkpoint).norm();
                        let d_pair = rec.agents[i]
                            .epoch_distance
                            .max(rec.agents[j].epoch_distance);
                        let bound = self.c * delta_max + d_pair + BOUND_TOL;
                        self.check(dist <= bound, || {
                            format!(
                                "t={t}: checkpoints {i},{j} are {dist:.3e} apart, bound {bound:.3e}"
                            )
                        });
                    }
                }

                // within-epoch containment: iterates that did not restart
                // stay strictly inside the epoch distance; the restarting
                // iterate may overshoot by one mixed step
                for (i, a) in rec.agents.iter().enumerate() {
                    let moved = (&rec.x_next[i] - &a.checkpoint).norm();
                    let slack = if a.flag {
                        (self.c + 1.0) * a.delta
                    } else {
                        0.0
                    };
                    let bound = a.epoch_distance + slack + BOUND_TOL;
                    self.check(moved <= bound, || {
                        format!(
                            "t={t}: agent {i} moved {moved:.3e} from its checkpoint, bound {bound:.3e}"
                        )
                    });
                }
            }
            AlgorithmKind::CgtvrSync => {
                // per-epoch radius bound from the epoch-start iterates
                if rec.fresh_epoch.iter().all(|&f| f) {
                    self.epoch_snapshot = Some((t, rec.x.to_vec()));
                }
                let snapshot = self.epoch_snapshot.take();
                if let Some((s, ref start)) = snapshot {
                    let k = (t - s + 1) as f64;
                    for i in 0..m {
                        let dist = (&rec.x_next[i] - &start[i]).norm();
                        let bound = (self.c + k) * delta_max + BOUND_TOL;
                        self.check(dist <= bound, || {
                            format!(
                                "t={t}: agent {i} is {dist:.3e} from its epoch start, bound {bound:.3e}"
                            )
                        });
                    }
                }
                self.epoch_snapshot = snapshot;
            }
            _ => {}
        }

        // smoothness-ratio guard
        if self.check_ratio_guard && adaptive {
            let l_lo = rec
                .agents
                .iter()
                .map(|a| a.l_local)
                .fold(f64::INFINITY, f64::min);
            let l_hi = rec.agents.iter().map(|a| a.l_local).fold(0.0f64, f64::max);
            let ratio = l_hi / l_lo;
            let gamma = self.gamma;
            self.check(ratio <= gamma + BOUND_TOL, || {
                format!("t={t}: smoothness ratio {ratio:.6} exceeds gamma = {gamma:.6}")
            });
        }

        // epoch starts: estimator equals a fresh full local gradient, and
        // the inverse stepsize is theta * L
        for (i, a) in rec.agents.iter().enumerate() {
            if !rec.fresh_epoch[i] {
                continue;
            }
            self.problem
                .local_gradient_into(i, &rec.x[i], &mut self.grad_scratch);
            let dev = (&self.grad_scratch - &rec.g[i]).norm();
            self.check(dev <= EXACT_TOL, || {
                format!("t={t}: agent {i} estimator differs from full gradient by {dev:.3e}")
            });
            if adaptive && self.kind == AlgorithmKind::CgtvrStag {
                let expect = self.theta * a.l_local;
                self.check((a.beta - expect).abs() <= 1e-12 * expect, || {
                    format!("t={t}: agent {i} beta {} != theta*L {expect}", a.beta)
                });
            }
        }

        // bookkeeping
        self.prev_xbar = Some(rec.x_bar.clone());
        for (slot, a) in self.last_restarts.iter_mut().zip(rec.agents) {
            *slot = a.restarts;
        }
        self.history.push_back((t, rec.x.to_vec()));
        if self.history.len() > HISTORY {
            self.history.pop_front();
        }
    }
}
