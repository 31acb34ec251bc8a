//! Small shared helpers: deterministic RNG stream derivation and vector
//! sampling.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Derive an independent, reproducible stream from a base seed and an index.
/// Uses a splitmix-style scramble so neighbouring indices decorrelate.
pub fn derive_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Standard normal vector of length `d`.
pub fn standard_normal_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Standard normal vector scaled to unit Euclidean norm.
pub fn unit_normal_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    let mut v = standard_normal_vector(rng, d);
    let n = v.norm();
    if n > 0.0 {
        v /= n;
    } else {
        v[0] = 1.0;
    }
    v
}
