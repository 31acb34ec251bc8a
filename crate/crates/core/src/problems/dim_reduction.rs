//! Linear dimension reduction: per-record components
//! `f_ik(U) = || x_ik - U U^T x_ik ||^2` over `U` in `R^{d x d'}`, flattened
//! row-major. All norms on the variable are Frobenius norms of `U`, i.e.
//! vector 2-norms of the flattening.

use nalgebra::DVector;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::problems::{Problem, SmoothnessEstimator};
use crate::smoothness::SmoothnessModel;
use crate::util::{derive_stream, standard_normal_vector};

#[derive(Clone, Debug)]
pub struct DimReduction {
    d: usize,
    d_prime: usize,
    /// `records[i][k]`: data point k of agent i.
    records: Vec<Vec<DVector<f64>>>,
    /// Per-agent `sum_k ||x_ik||^2`.
    energy: Vec<f64>,
}

impl DimReduction {
    /// Partition `records` (in order) into agents by the given sizes.
    pub fn from_records(
        records: Vec<DVector<f64>>,
        partition: &[usize],
        d_prime: usize,
    ) -> Result<Self> {
        let total: usize = partition.iter().sum();
        if total != records.len() {
            return Err(Error::invalid(format!(
                "partition sums to {total} but there are {} records",
                records.len()
            )));
        }
        if partition.iter().any(|&n| n == 0) {
            return Err(Error::invalid("every agent needs at least one record"));
        }
        let d = records
            .first()
            .map(|r| r.len())
            .ok_or_else(|| Error::invalid("no records"))?;
        if d_prime >= d {
            return Err(Error::invalid("d_prime must be smaller than d"));
        }
        if records.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("records have inconsistent dimensions"));
        }
        let mut iter = records.into_iter();
        let mut by_agent = Vec::with_capacity(partition.len());
        for &n in partition {
            by_agent.push(iter.by_ref().take(n).collect::<Vec<_>>());
        }
        let energy = by_agent
            .iter()
            .map(|rs| rs.iter().map(|r| r.norm_squared()).sum())
            .collect();
        Ok(DimReduction {
            d,
            d_prime,
            records: by_agent,
            energy,
        })
    }

    /// Shuffle records with a seeded generator, then partition. This is the
    /// random assignment used when ingesting a real dataset.
    pub fn from_records_shuffled(
        mut records: Vec<DVector<f64>>,
        partition: &[usize],
        d_prime: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = derive_stream(seed, 0x5055_4646);
        records.shuffle(&mut rng);
        Self::from_records(records, partition, d_prime)
    }

    pub fn data_dim(&self) -> usize {
        self.d
    }

    pub fn target_dim(&self) -> usize {
        self.d_prime
    }

    pub fn record(&self, agent: usize, k: usize) -> &DVector<f64> {
        &self.records[agent][k]
    }
}

/// Smoothness bound for a sum of reconstruction components over a ball of
/// flattened `U`s: `E + (E + 2) * s^2` with `E = sum_k ||x_ik||^2` and the
/// reach `s = ||center||_F + radius`. An agent with no records degenerates to
/// the evaluation floor.
pub fn dim_reduction_smoothness(records: &[DVector<f64>]) -> SmoothnessModel {
    let energy: f64 = records.iter().map(|r| r.norm_squared()).sum();
    SmoothnessModel::linear_comb(
        1.0,
        energy + 2.0,
        SmoothnessModel::constant(energy.max(f64::MIN_POSITIVE)).expect("positive constant"),
        SmoothnessModel::power(0.0, 2.0).expect("valid power"),
    )
    .expect("positive coefficients")
}

/// Synthetic records with per-coordinate scales decaying linearly from 1.0
/// to 0.1, so a low-dimensional projection captures most of the energy.
pub fn generate_dim_reduction_synthetic(
    d: usize,
    partition: &[usize],
    d_prime: usize,
    seed: u64,
) -> Result<DimReduction> {
    let total: usize = partition.iter().sum();
    if total == 0 {
        return Err(Error::invalid("partition must cover at least one record"));
    }
    let mut rng = derive_stream(seed, 0x4452_4543);
    let scales: Vec<f64> = (0..d)
        .map(|k| {
            if d == 1 {
                1.0
            } else {
                1.0 - 0.9 * k as f64 / (d - 1) as f64
            }
        })
        .collect();
    let mut records = Vec::with_capacity(total);
    for _ in 0..total {
        let mut v = standard_normal_vector(&mut rng, d);
        for (x, s) in v.iter_mut().zip(&scales) {
            *x *= *s;
        }
        records.push(v);
    }
    DimReduction::from_records(records, partition, d_prime)
}

impl DimReduction {
    /// Split the flattened variable into `(z, e)` with `z = U^T x` and
    /// `e = x - U z`, the reconstruction residual.
    fn project(&self, u: &DVector<f64>, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (d, dp) = (self.d, self.d_prime);
        let mut z: DVector<f64> = DVector::zeros(dp);
        for r in 0..d {
            let xr = x[r];
            if xr != 0.0 {
                for c in 0..dp {
                    z[c] += u[r * dp + c] * xr;
                }
            }
        }
        let mut e = x.clone();
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..dp {
                acc += u[r * dp + c] * z[c];
            }
            e[r] -= acc;
        }
        (z, e)
    }
}

impl Problem for DimReduction {
    fn num_agents(&self) -> usize {
        self.records.len()
    }

    fn dim(&self) -> usize {
        self.d * self.d_prime
    }

    fn num_components(&self, agent: usize) -> usize {
        self.records[agent].len()
    }

    fn component_objective(&self, agent: usize, k: usize, u: &DVector<f64>) -> f64 {
        let (_, e) = self.project(u, &self.records[agent][k]);
        e.norm_squared()
    }

    fn accumulate_component_gradient(
        &self,
        agent: usize,
        k: usize,
        u: &DVector<f64>,
        scale: f64,
        acc: &mut DVector<f64>,
    ) {
        // grad_U ||x - U U^T x||^2 = -2 (e z^T + x (U^T e)^T),
        // z = U^T x, e = x - U z.
        let x = &self.records[agent][k];
        let (d, dp) = (self.d, self.d_prime);
        let (z, e) = self.project(u, x);
        let mut ute: DVector<f64> = DVector::zeros(dp);
        for r in 0..d {
            let er = e[r];
            if er != 0.0 {
                for c in 0..dp {
                    ute[c] += u[r * dp + c] * er;
                }
            }
        }
        let s = -2.0 * scale;
        for r in 0..d {
            for c in 0..dp {
                acc[r * dp + c] += s * (e[r] * z[c] + x[r] * ute[c]);
            }
        }
    }

    fn smoothness_model(&self, agent: usize, _kind: SmoothnessEstimator) -> SmoothnessModel {
        dim_reduction_smoothness(&self.records[agent])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::finite_difference_gradient;
    use crate::smoothness::Ball;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn flat(rows: &[&[f64]]) -> DVector<f64> {
        DVector::from_vec(rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    #[test]
    fn orthonormal_column_spanning_record_is_a_minimum() {
        // d = 3, d' = 1, record along e1, U = e1 column
        let rec = DVector::from_vec(vec![2.0, 0.0, 0.0]);
        let p = DimReduction::from_records(vec![rec], &[1], 1).unwrap();
        let u = flat(&[&[1.0], &[0.0], &[0.0]]);
        assert_relative_eq!(p.component_objective(0, 0, &u), 0.0, epsilon = 1e-24);
        let mut g = DVector::zeros(3);
        p.accumulate_component_gradient(0, 0, &u, 1.0, &mut g);
        assert!(g.norm() <= 1e-12);
    }

    #[test]
    fn zero_projection_gives_record_energy_and_zero_gradient() {
        let rec = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let p = DimReduction::from_records(vec![rec.clone()], &[1], 2).unwrap();
        let u = DVector::zeros(6);
        assert_relative_eq!(
            p.component_objective(0, 0, &u),
            rec.norm_squared(),
            epsilon = 1e-12
        );
        let mut g = DVector::zeros(6);
        p.accumulate_component_gradient(0, 0, &u, 1.0, &mut g);
        assert_eq!(g, DVector::zeros(6));
        let fd = finite_difference_gradient(|v| p.component_objective(0, 0, v), &u, None).unwrap();
        assert!(fd.norm() <= 1e-6);
    }

    #[test]
    fn record_scaling_scales_objective_quadratically() {
        let rec = DVector::from_vec(vec![0.3, 1.1, -0.4]);
        let scaled = &rec * 2.0;
        let p1 = DimReduction::from_records(vec![rec], &[1], 1).unwrap();
        let p2 = DimReduction::from_records(vec![scaled], &[1], 1).unwrap();
        let u = flat(&[&[0.4], &[-0.2], &[0.9]]);
        assert_relative_eq!(
            p2.component_objective(0, 0, &u),
            4.0 * p1.component_objective(0, 0, &u),
            epsilon = 1e-12
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = generate_dim_reduction_synthetic(5, &[3, 2], 2, 77).unwrap();
        let mut rng = derive_stream(41, 3);
        for _ in 0..20 {
            let u = standard_normal_vector(&mut rng, 10);
            let i = rng.gen_range(0..2);
            let k = rng.gen_range(0..p.num_components(i));
            let mut g = DVector::zeros(10);
            p.accumulate_component_gradient(i, k, &u, 1.0, &mut g);
            let fd =
                finite_difference_gradient(|v| p.component_objective(i, k, v), &u, None).unwrap();
            let rel = (&g - &fd).norm() / g.norm().max(1e-12);
            assert!(rel <= 1e-5, "relative error {rel}");
        }
    }

    #[test]
    fn smoothness_model_examples() {
        // one record with ||x||^2 = 1: value at the origin point-ball is
        // E + (E + 2) * 0 = 1 (the floor is inactive since it is already 1)
        let rec = DVector::from_vec(vec![1.0, 0.0]);
        let model = dim_reduction_smoothness(&[rec]);
        let zero = Ball::new(DVector::zeros(2), 0.0).unwrap();
        assert_relative_eq!(model.eval(&zero).unwrap(), 1.0, epsilon = 1e-12);

        // doubling the radius (center at zero) quadruples the growth term
        let b1 = Ball::new(DVector::zeros(2), 1.0).unwrap();
        let b2 = Ball::new(DVector::zeros(2), 2.0).unwrap();
        let g1 = model.eval(&b1).unwrap() - 1.0;
        let g2 = model.eval(&b2).unwrap() - 1.0;
        assert_relative_eq!(g2, 4.0 * g1, epsilon = 1e-12);

        // an agent with no records clamps to the floor
        let empty = dim_reduction_smoothness(&[]);
        assert_eq!(empty.eval(&zero).unwrap(), 1.0);
    }

    #[test]
    fn partition_mismatch_is_rejected() {
        let recs = vec![DVector::zeros(3), DVector::zeros(3)];
        assert!(DimReduction::from_records(recs, &[3], 1).is_err());
    }

    #[test]
    fn shuffled_split_is_deterministic() {
        let recs: Vec<DVector<f64>> = (0..10)
            .map(|i| DVector::from_element(2, i as f64))
            .collect();
        let a = DimReduction::from_records_shuffled(recs.clone(), &[6, 4], 1, 9).unwrap();
        let b = DimReduction::from_records_shuffled(recs, &[6, 4], 1, 9).unwrap();
        for i in 0..2 {
            for k in 0..a.num_components(i) {
                assert_eq!(a.record(i, k), b.record(i, k));
            }
        }
    }
}
