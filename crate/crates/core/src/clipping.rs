//! Norm-based clipping operator and the gradient-mapping stationarity
//! measure.
//!
//! `clip(v, beta, delta)` returns `v / beta` while `||v|| <= beta delta` and
//! the radius-`delta` rescaling `delta v / ||v||` otherwise, so the update
//! norm never exceeds `delta`. The boundary `||v|| = beta delta` is assigned
//! to the linear branch; both branches agree there.

use nalgebra::DVector;

/// Clip parameters: inverse stepsize `beta` and clipping threshold `delta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipParams {
    pub beta: f64,
    pub delta: f64,
}

impl ClipParams {
    pub fn new(beta: f64, delta: f64) -> Self {
        assert!(beta > 0.0 && delta > 0.0, "clip parameters must be positive");
        ClipParams { beta, delta }
    }
}

/// Clipped update direction; `||result|| <= delta` always.
pub fn clip(v: &DVector<f64>, beta: f64, delta: f64) -> DVector<f64> {
    let mut out = v.clone();
    clip_in_place(&mut out, beta, delta);
    out
}

/// In-place variant used by the optimizer hot loop.
pub fn clip_in_place(v: &mut DVector<f64>, beta: f64, delta: f64) {
    let norm = v.norm();
    if norm <= beta * delta {
        *v /= beta;
    } else {
        *v *= delta / norm;
    }
}

/// True iff `v` falls on the linear branch, where `clip(v) = v / beta`
/// exactly (boundary included).
pub fn is_unclipped(v: &DVector<f64>, beta: f64, delta: f64) -> bool {
    v.norm() <= beta * delta
}

/// Gradient mapping `G = beta_min * clip(grad, beta_min, delta)`. On the
/// linear branch this is the gradient itself, returned exactly; otherwise the
/// gradient rescaled to norm `beta_min * delta`.
pub fn gradient_mapping(grad: &DVector<f64>, beta_min: f64, delta: f64) -> DVector<f64> {
    let norm = grad.norm();
    if norm <= beta_min * delta {
        grad.clone()
    } else {
        grad * (beta_min * delta / norm)
    }
}

/// Squared norm of the gradient mapping without materializing the vector.
pub fn gradient_mapping_norm_sq(grad_norm_sq: f64, beta_min: f64, delta: f64) -> f64 {
    let cap = beta_min * delta;
    if grad_norm_sq.sqrt() <= cap {
        grad_norm_sq
    } else {
        cap * cap
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    use crate::util::derive_stream;

    #[test]
    fn linear_branch_passthrough() {
        let v = DVector::from_vec(vec![3.0, 4.0]);
        let out = clip(&v, 1.0, 10.0);
        assert_eq!(out, v);
    }

    #[test]
    fn clipped_branch_rescales() {
        // ||v|| = 5 > beta delta = 4, so delta v / ||v||
        let v = DVector::from_vec(vec![3.0, 4.0]);
        let out = clip(&v, 2.0, 2.0);
        assert_relative_eq!(out[0], 1.2, epsilon = 1e-15);
        assert_relative_eq!(out[1], 1.6, epsilon = 1e-15);
    }

    #[test]
    fn zero_maps_to_zero() {
        let v = DVector::zeros(4);
        assert_eq!(clip(&v, 3.0, 0.5), DVector::zeros(4));
    }

    #[test]
    fn gradient_mapping_examples() {
        let g = DVector::from_vec(vec![0.3, 0.4]);
        // unclipped: returned exactly
        let out = gradient_mapping(&g, 1.0, 5.0);
        assert_eq!(out, g);

        let big = DVector::from_vec(vec![30.0, 40.0]);
        let out = gradient_mapping(&big, 1.0, 5.0);
        assert_relative_eq!(out[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(out[1], 4.0, epsilon = 1e-12);

        let zero = DVector::zeros(2);
        assert_eq!(gradient_mapping(&zero, 1.0, 5.0), zero);
    }

    #[test]
    fn unclipped_boundary_included() {
        let beta = 2.0;
        let delta = 2.5;
        let mut v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        v *= beta * delta;
        assert!(is_unclipped(&v, beta, delta));
        v *= 1.0 + 1e-12;
        assert!(!is_unclipped(&v, beta, delta));
    }

    #[test]
    fn branch_continuity_at_boundary() {
        let mut rng = derive_stream(11, 0);
        for _ in 0..100 {
            let dim = rng.gen_range(1..16);
            let beta = 10f64.powf(rng.gen_range(-2.0..2.0));
            let delta = 10f64.powf(rng.gen_range(-2.0..2.0));
            let mut v = crate::util::standard_normal_vector(&mut rng, dim);
            if v.norm() == 0.0 {
                continue;
            }
            let scale = beta * delta / v.norm();
            v *= scale;
            // Both branch formulas agree at the boundary.
            let linear = &v / beta;
            let rescaled = &v * (delta / v.norm());
            assert_relative_eq!(
                (linear - rescaled).norm(),
                0.0,
                epsilon = 1e-12 * delta.max(1.0)
            );
        }
    }

    #[test]
    fn fuzz_norm_bound_and_alignment() {
        let mut rng = derive_stream(7, 1);
        for _ in 0..2000 {
            let dim = rng.gen_range(1..64);
            let beta = 10f64.powf(rng.gen_range(-3.0..3.0));
            let delta = 10f64.powf(rng.gen_range(-3.0..3.0));
            let v = crate::util::standard_normal_vector(&mut rng, dim)
                * 10f64.powf(rng.gen_range(-3.0..4.0));
            let t = clip(&v, beta, delta);
            assert!(t.norm() <= delta * (1.0 + 1e-12));
            // <T(v), v> >= beta ||T(v)||^2
            let lhs = t.dot(&v);
            let rhs = beta * t.norm_squared();
            assert!(lhs >= rhs - 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn non_expansive_across_inputs() {
        // ||clip(u) - clip(w)|| <= ||u - w|| / beta (projection view)
        let mut rng = derive_stream(13, 2);
        for _ in 0..2000 {
            let dim = rng.gen_range(1..32);
            let beta = 10f64.powf(rng.gen_range(-2.0..2.0));
            let delta = 10f64.powf(rng.gen_range(-2.0..2.0));
            let u = crate::util::standard_normal_vector(&mut rng, dim)
                * 10f64.powf(rng.gen_range(-2.0..3.0));
            let w = crate::util::standard_normal_vector(&mut rng, dim)
                * 10f64.powf(rng.gen_range(-2.0..3.0));
            let lhs = (clip(&u, beta, delta) - clip(&w, beta, delta)).norm();
            let rhs = (&u - &w).norm() / beta;
            assert!(lhs <= rhs * (1.0 + 1e-10) + 1e-14);
        }
    }
}
