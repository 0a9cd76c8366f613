//! Reproducible per-path random number streams.
//!
//! Each simulated path owns an independent ChaCha substream keyed by
//! `(seed, path_index)`, so path `i` draws the same innovations regardless of
//! how many paths run, in which order, or on how many threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::normal::inv_norm_cdf;
use crate::real::Real;

/// Standard normal generator for one path.
pub struct PathNormals {
    rng: ChaCha8Rng,
}

impl PathNormals {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        PathNormals { rng }
    }

    /// Uniform draw on the open interval `(0, 1)`.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw by inverting the distribution function.
    pub fn next_normal<T: Real>(&mut self) -> T {
        inv_norm_cdf(T::of(self.next_uniform()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_are_independent_of_run_size() {
        let a: Vec<f64> = (0..4).map(|_| PathNormals::new(7, 3).next_normal()).collect();
        assert!(a.iter().all(|x| *x == a[0]));
        let mut p3 = PathNormals::new(7, 3);
        let first: f64 = p3.next_normal();
        let second: f64 = p3.next_normal();
        assert_ne!(first, second);
        let mut other_path = PathNormals::new(7, 4);
        assert_ne!(first, other_path.next_normal::<f64>());
        let mut other_seed = PathNormals::new(8, 3);
        assert_ne!(first, other_seed.next_normal::<f64>());
    }

    #[test]
    fn uniforms_stay_inside_open_interval() {
        let mut rng = PathNormals::new(0, 0);
        for _ in 0..10_000 {
            let u = rng.next_uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn normals_have_reasonable_moments() {
        let mut rng = PathNormals::new(42, 0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z: f64 = rng.next_normal();
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }
}
