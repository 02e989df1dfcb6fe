use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::inference::equal_correlation_theta;
use crate::linalg::{DesignData, Matrix, Vector};

/// One simulated regression together with its population quantities.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub data: DesignData,
    pub beta0: Vector,
    pub eps: Vector,
    pub sigma0: Matrix,
    pub theta0: Matrix,
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `β⁰` with entries `±signal` (alternating, starting positive) at the first `s₀` coordinates.
pub fn sparse_beta(p: usize, s0: usize, signal: f64) -> Vector {
    Vector::from_fn(p, |j, _| match j {
        j if j >= s0 => 0.0,
        j if j % 2 == 0 => signal,
        _ => -signal,
    })
}

/// Gaussian design with equal-correlation rows `x = √(1−ρ)z + √ρ·w·ι`.
pub fn equal_correlation_design<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> Matrix {
    let z = Matrix::from_fn(n, p, |_, _| normal(rng));
    let w = Vector::from_fn(n, |_, _| normal(rng));
    let (a, b) = ((1.0 - rho).sqrt(), rho.sqrt());
    Matrix::from_fn(n, p, |i, j| a * z[(i, j)] + b * w[i])
}

/// Draws `(X, ε)` in that order from `rng` and sets `Y = Xβ⁰ + ε`.
pub fn generate_dataset<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> Result<Dataset> {
    let (n, p) = (config.n, config.p);
    if config.s0 > p {
        return Err(Error::domain(format!("s₀ = {} exceeds p = {p}", config.s0)));
    }
    if !(0.0..1.0).contains(&config.rho) {
        return Err(Error::domain(format!("ρ must lie in [0, 1), got {}", config.rho)));
    }
    let (sigma0, theta0) = if p >= 2 {
        let e = equal_correlation_theta(p, config.rho)?;
        (e.sigma0, e.theta0)
    } else {
        (Matrix::identity(1, 1), Matrix::identity(1, 1))
    };
    let x = equal_correlation_design(n, p, config.rho, rng);
    let eps = Vector::from_fn(n, |_, _| config.sigma * normal(rng));
    let beta0 = sparse_beta(p, config.s0, config.signal);
    let y = &x * &beta0 + &eps;
    Ok(Dataset { data: DesignData::new(x, y)?, beta0, eps, sigma0, theta0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaining::rep_rng;
    use crate::linalg::sup_norm;

    fn cfg(n: usize, p: usize, rho: f64, sigma: f64) -> ExperimentConfig {
        ExperimentConfig { n, p, rho, sigma, s0: 3.min(p), seed: Some(1), ..ExperimentConfig::default() }
    }

    #[test]
    fn sample_covariance_is_close_to_identity() {
        let d = generate_dataset(&cfg(10_000, 10, 0.0, 1.0), &mut rep_rng(4, 0)).unwrap();
        let dev = sup_norm(&(d.data.gram().into_inner() - Matrix::identity(10, 10)));
        assert!(dev <= 4.0 * (10f64.ln() / 10_000.0).sqrt(), "{dev}");
    }

    #[test]
    fn equal_correlation_rows() {
        let d = generate_dataset(&cfg(20_000, 4, 0.6, 1.0), &mut rep_rng(5, 0)).unwrap();
        let dev = sup_norm(&(d.data.gram().into_inner() - &d.sigma0));
        assert!(dev < 0.05, "{dev}");
        assert!((&d.theta0 * &d.sigma0 - Matrix::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn noiseless_and_reproducible() {
        let d = generate_dataset(&cfg(30, 8, 0.2, 0.0), &mut rep_rng(6, 2)).unwrap();
        assert!(d.eps.iter().all(|&e| e == 0.0));
        assert_eq!(d.data.y(), &(d.data.x() * &d.beta0));
        assert_eq!(d.beta0.as_slice(), &[1.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let again = generate_dataset(&cfg(30, 8, 0.2, 0.0), &mut rep_rng(6, 2)).unwrap();
        assert_eq!(again.data.x(), d.data.x());
        let other = generate_dataset(&cfg(30, 8, 0.2, 0.0), &mut rep_rng(6, 3)).unwrap();
        assert_ne!(other.data.x(), d.data.x());
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut c = cfg(10, 2, 0.0, 1.0);
        c.s0 = 3;
        assert!(generate_dataset(&c, &mut rep_rng(0, 0)).is_err());
        assert!(generate_dataset(&cfg(10, 4, 1.0, 1.0), &mut rep_rng(0, 0)).is_err());
    }
}
