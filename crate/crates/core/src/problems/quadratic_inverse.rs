//! Distributed quadratic inverse problem (phase-retrieval style):
//! components `f_ij(x) = (b_ij - <a_ij, x>^2)^2` with Gaussian sampling
//! vectors and noisy squared measurements of a hidden unit-norm signal.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::problems::{Problem, SmoothnessEstimator};
use crate::smoothness::SmoothnessModel;
use crate::util::{derive_stream, standard_normal_vector, unit_normal_vector};

#[derive(Clone, Debug)]
pub struct QuadraticInverse {
    dim: usize,
    /// `a[i][j]`: sampling vector j of agent i.
    a: Vec<Vec<DVector<f64>>>,
    /// `b[i][j] = <a_ij, x_true>^2 + noise`.
    b: Vec<Vec<f64>>,
    x_true: DVector<f64>,
    noise_std: f64,
    /// Per-agent `|| (1/n) sum_j b_ij a_ij a_ij^T ||` (spectral norm).
    measurement_norm: Vec<f64>,
    /// Per-agent `(1/n) sum_j ||a_ij||^4`.
    quartic_mean: Vec<f64>,
}

impl QuadraticInverse {
    /// Deterministic generation from a seed. The signal is a unit-norm
    /// Gaussian vector; `a_ij ~ N(0, I_d)`; `b_ij = <a_ij, x_true>^2 +
    /// noise_std * z_ij`.
    pub fn generate(
        dim: usize,
        agents: usize,
        n_per_agent: usize,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if dim < 1 || n_per_agent < 1 || agents < 1 {
            return Err(Error::invalid(
                "quadratic inverse requires dim, agents, n_per_agent >= 1",
            ));
        }
        if !(noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be nonnegative"));
        }
        let mut signal_rng = derive_stream(seed, 0x5349_474E);
        let x_true = unit_normal_vector(&mut signal_rng, dim);

        let mut a = Vec::with_capacity(agents);
        let mut b = Vec::with_capacity(agents);
        for i in 0..agents {
            let mut rng = derive_stream(seed, 0x4441_5441 ^ (i as u64 + 1));
            let mut ai = Vec::with_capacity(n_per_agent);
            let mut bi = Vec::with_capacity(n_per_agent);
            for _ in 0..n_per_agent {
                let v = standard_normal_vector(&mut rng, dim);
                let clean = v.dot(&x_true).powi(2);
                let noise: f64 = rng.sample(StandardNormal);
                bi.push(clean + noise_std * noise);
                ai.push(v);
            }
            a.push(ai);
            b.push(bi);
        }

        let mut measurement_norm = Vec::with_capacity(agents);
        let mut quartic_mean = Vec::with_capacity(agents);
        for i in 0..agents {
            let n = a[i].len() as f64;
            let mut mat = DMatrix::zeros(dim, dim);
            let mut quartic = 0.0;
            for (v, &bv) in a[i].iter().zip(&b[i]) {
                mat.ger(bv / n, v, v, 1.0);
                quartic += v.norm_squared().powi(2);
            }
            measurement_norm.push(spectral_norm_symmetric(&mat));
            quartic_mean.push(quartic / n);
        }

        Ok(QuadraticInverse {
            dim,
            a,
            b,
            x_true,
            noise_std,
            measurement_norm,
            quartic_mean,
        })
    }

    pub fn x_true(&self) -> &DVector<f64> {
        &self.x_true
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn sampling_vector(&self, agent: usize, j: usize) -> &DVector<f64> {
        &self.a[agent][j]
    }

    pub fn measurement(&self, agent: usize, j: usize) -> f64 {
        self.b[agent][j]
    }

    /// Build an instance from explicit data (used by unit tests).
    pub fn from_data(a: Vec<Vec<DVector<f64>>>, b: Vec<Vec<f64>>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::invalid("mismatched sampling/measurement data"));
        }
        let dim = a[0]
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::invalid("agents need at least one component"))?;
        let mut measurement_norm = Vec::with_capacity(a.len());
        let mut quartic_mean = Vec::with_capacity(a.len());
        for (ai, bi) in a.iter().zip(&b) {
            if ai.is_empty() || ai.len() != bi.len() {
                return Err(Error::invalid("mismatched sampling/measurement data"));
            }
            let n = ai.len() as f64;
            let mut mat = DMatrix::zeros(dim, dim);
            let mut quartic = 0.0;
            for (v, &bv) in ai.iter().zip(bi) {
                mat.ger(bv / n, v, v, 1.0);
                quartic += v.norm_squared().powi(2);
            }
            measurement_norm.push(spectral_norm_symmetric(&mat));
            quartic_mean.push(quartic / n);
        }
        Ok(QuadraticInverse {
            dim,
            a,
            b,
            x_true: DVector::zeros(dim),
            noise_std: 0.0,
            measurement_norm,
            quartic_mean,
        })
    }
}

/// Spectral norm of a symmetric matrix via dense eigendecomposition.
fn spectral_norm_symmetric(mat: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(mat.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

impl Problem for QuadraticInverse {
    fn num_agents(&self) -> usize {
        self.a.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn num_components(&self, agent: usize) -> usize {
        self.a[agent].len()
    }

    fn component_objective(&self, agent: usize, j: usize, x: &DVector<f64>) -> f64 {
        let u = self.a[agent][j].dot(x);
        (self.b[agent][j] - u * u).powi(2)
    }

    fn accumulate_component_gradient(
        &self,
        agent: usize,
        j: usize,
        x: &DVector<f64>,
        scale: f64,
        acc: &mut DVector<f64>,
    ) {
        // grad = -4 (b - <a,x>^2) <a,x> a
        let a = &self.a[agent][j];
        let u = a.dot(x);
        let coeff = -4.0 * (self.b[agent][j] - u * u) * u * scale;
        acc.axpy(coeff, a, 1.0);
    }

    /// Smoothness of the local objective over a ball, as a function of the
    /// reach `s = ||center|| + radius`:
    ///
    /// * approximate: `||(1/n) sum b a a^T|| + 5 s^2` (the practical
    ///   Gaussian-concentration estimate),
    /// * conservative: `||(1/n) sum b a a^T|| + (3/n) sum ||a||^4 s^2` (the
    ///   direct worst-case estimate; dimension-dependent and much larger).
    fn smoothness_model(&self, agent: usize, kind: SmoothnessEstimator) -> SmoothnessModel {
        let coeff = match kind {
            SmoothnessEstimator::Approximate => 5.0,
            SmoothnessEstimator::Conservative => 3.0 * self.quartic_mean[agent],
        };
        let base = self.measurement_norm[agent].max(f64::MIN_POSITIVE);
        SmoothnessModel::linear_comb(
            1.0,
            coeff,
            SmoothnessModel::constant(base).expect("positive constant"),
            SmoothnessModel::power(0.0, 2.0).expect("valid power"),
        )
        .expect("positive coefficients")
    }
}
