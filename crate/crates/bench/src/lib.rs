//! Seeded fixtures shared by the solver benchmarks.

use lassokit::chaining::rep_rng;
use lassokit::linalg::{DesignData, Matrix, Vector};
use rand_distr::{Distribution, StandardNormal};

/// Gaussian `n × p` design.
pub fn design(n: usize, p: usize, seed: u64) -> Matrix {
    let mut rng = rep_rng(seed, 0);
    Matrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
}

/// `Y = Xβ⁰ + ε` with three unit coefficients and standard noise.
pub fn regression(n: usize, p: usize, seed: u64) -> DesignData {
    let x = design(n, p, seed);
    let mut rng = rep_rng(seed, 1);
    let beta0 = Vector::from_fn(p, |j, _| if j < 3 { 1.0 } else { 0.0 });
    let eps = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let y = &x * beta0 + eps;
    DesignData::new(x, y).expect("finite fixture")
}
