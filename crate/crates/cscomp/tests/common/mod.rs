//! Shared fixtures for the integration suites.

#![allow(dead_code)]

use cscomp::linalg::CMat;
use cscomp::model::SensingMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// i.i.d. CN(0, 1/M) sensing matrix — the classical ensemble whose RIP-style
/// conditioning the recovery criteria assume.
pub fn gaussian_f(m: usize, n: usize, seed: u64) -> SensingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SensingMatrix::from_entries(gaussian_mat(m, n, &mut rng))
}

/// i.i.d. CN(0, 1/rows) matrix drawn from `rng`.
pub fn gaussian_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
    let scale = std::f64::consts::FRAC_1_SQRT_2 / (rows as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * scale, im * scale)
    })
}

/// i.i.d. CN(0, 1) matrix drawn from `rng`.
pub fn unit_complex_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
    Array2::from_shape_fn((rows, cols), |_| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im)
    })
}
