//! The Lasso family and basis pursuit.
//!
//! Penalty conventions, each matching the estimator's usual form:
//!
//! | estimator | objective | effective penalty on `Xᵀ(Y − Xβ)/n` |
//! |---|---|---|
//! | [`solve_lasso`] | `‖Y − Xβ‖²_n + 2λ‖β‖₁` | `λ` |
//! | [`solve_lasso_scaled`] | `‖Y − Xβ‖²_n + 2λσ‖β‖₁` | `λσ` |
//! | [`solve_sqrt_lasso`] | `‖Y − Xβ‖_n + λ‖β‖₁` | `λσ̂`, `σ̂ = ‖Y − Xβ̂‖_n` |
//! | [`solve_scaled_lasso`] | `β̂(σ̃)` with `σ̃² = ‖Y − Xβ̂‖²_n + λσ̃‖β̂‖₁` | `λσ̃` |
//!
//! All four share one coordinate-descent kernel driven by the effective penalty.

mod basis_pursuit;
mod cd;
mod scale;

pub use basis_pursuit::{basis_pursuit, BasisPursuit};
pub use cd::{CdSettings, QuadraticProblem};
pub use scale::SolverSettings;

pub(crate) use cd::{coordinate_descent, kkt_from_gradient};
pub(crate) use scale::{scale_fixed_point, ScaleRule};

use crate::error::{Error, Result};
use crate::linalg::{l1_norm, DesignData, Vector};

/// Smallest admissible noise scale; reaching it is reported as an error.
pub const SIGMA_MIN: f64 = 1e-12;

/// A converged Lasso fit together with its KKT certificate.
#[derive(Debug, Clone)]
pub struct LassoFit {
    beta: Vector,
    residual: Vector,
    z: Vector,
    lambda: f64,
    sigma: f64,
    iterations: usize,
    kkt_violation: f64,
}

impl LassoFit {
    /// Builds a fit record for an arbitrary coefficient vector.
    ///
    /// `sigma = 0` marks a plain (not scale-parameterized) fit. The subgradient
    /// certificate is `sign(β_j)` on the support and the clipped normalized
    /// gradient elsewhere.
    pub fn from_coefficients(data: &DesignData, beta: Vector, lambda: f64, sigma: f64) -> Result<Self> {
        if beta.len() != data.p() {
            return Err(Error::dim(format!("β has length {}, design has {} columns", beta.len(), data.p())));
        }
        if !(lambda > 0.0) || !(sigma >= 0.0) || !lambda.is_finite() || !sigma.is_finite() {
            return Err(Error::domain("λ must be positive and σ nonnegative"));
        }
        let residual = data.residual(&beta);
        let lambda_eff = effective_penalty(lambda, sigma);
        let grad = correlation(data, &residual);
        let z = Vector::from_iterator(
            beta.len(),
            beta.iter().zip(grad.iter()).map(|(&b, &g)| {
                if b != 0.0 {
                    b.signum()
                } else {
                    (g / lambda_eff).clamp(-1.0, 1.0)
                }
            }),
        );
        let kkt_violation = (&grad - &z * lambda_eff).amax();
        Ok(Self { beta, residual, z, lambda, sigma, iterations: 0, kkt_violation })
    }

    fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn beta(&self) -> &Vector {
        &self.beta
    }

    pub fn residual(&self) -> &Vector {
        &self.residual
    }

    pub fn z(&self) -> &Vector {
        &self.z
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Scale parameter; 0 for a plain fit.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Coordinate-descent sweeps summed over all inner solves.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn kkt_violation(&self) -> f64 {
        self.kkt_violation
    }

    pub fn lambda_eff(&self) -> f64 {
        effective_penalty(self.lambda, self.sigma)
    }

    /// `‖Y − Xβ̂‖²_n`.
    pub fn rss(&self) -> f64 {
        self.residual.norm_squared() / self.residual.len() as f64
    }

    pub fn into_beta(self) -> Vector {
        self.beta
    }
}

/// A square-root or scaled Lasso fit with both noise-variance estimates.
#[derive(Debug, Clone)]
pub struct ScaleFit {
    base: LassoFit,
    sigma_hat_sq: f64,
    sigma_tilde_sq: f64,
    fixed_point_residual: f64,
    outer_iterations: usize,
}

impl ScaleFit {
    pub fn base(&self) -> &LassoFit {
        &self.base
    }

    pub fn beta(&self) -> &Vector {
        &self.base.beta
    }

    /// `‖Y − Xβ̂‖²_n`.
    pub fn sigma_hat_sq(&self) -> f64 {
        self.sigma_hat_sq
    }

    /// `‖Y − Xβ̂‖²_n + λ_eff‖β̂‖₁`.
    pub fn sigma_tilde_sq(&self) -> f64 {
        self.sigma_tilde_sq
    }

    pub fn sigma_hat(&self) -> f64 {
        self.sigma_hat_sq.sqrt()
    }

    pub fn sigma_tilde(&self) -> f64 {
        self.sigma_tilde_sq.sqrt()
    }

    /// Defect of the scale equation at the returned fit.
    pub fn fixed_point_residual(&self) -> f64 {
        self.fixed_point_residual
    }

    pub fn outer_iterations(&self) -> usize {
        self.outer_iterations
    }

    pub fn into_base(self) -> LassoFit {
        self.base
    }
}

fn effective_penalty(lambda: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        lambda * sigma
    } else {
        lambda
    }
}

fn correlation(data: &DesignData, residual: &Vector) -> Vector {
    data.x().tr_mul(residual) / data.n() as f64
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
    }
}

fn quadratic_problem(data: &DesignData) -> QuadraticProblem {
    let yy = data.y().norm_squared() / data.n() as f64;
    QuadraticProblem::new(data.gram().into_inner(), data.xty(), yy)
        .expect("design data has consistent dimensions")
}

/// Lasso with penalty `2λ‖β‖₁`.
pub fn solve_lasso(data: &DesignData, lambda: f64) -> Result<LassoFit> {
    solve_lasso_with(data, lambda, &SolverSettings::default())
}

pub fn solve_lasso_with(data: &DesignData, lambda: f64, settings: &SolverSettings) -> Result<LassoFit> {
    check_positive("λ", lambda)?;
    let out = coordinate_descent(&quadratic_problem(data), lambda, None, &settings.cd)?;
    Ok(LassoFit::from_coefficients(data, out.beta, lambda, 0.0)?.with_iterations(out.sweeps))
}

/// Lasso with penalty `2λσ‖β‖₁`; the same computation as `solve_lasso(data, λσ)`.
pub fn solve_lasso_scaled(data: &DesignData, lambda: f64, sigma: f64) -> Result<LassoFit> {
    check_positive("λ", lambda)?;
    check_positive("σ", sigma)?;
    let settings = SolverSettings::default();
    let out = coordinate_descent(&quadratic_problem(data), lambda * sigma, None, &settings.cd)?;
    Ok(LassoFit::from_coefficients(data, out.beta, lambda, sigma)?.with_iterations(out.sweeps))
}

/// Square-root Lasso `argmin ‖Y − Xβ‖_n + λ‖β‖₁`.
pub fn solve_sqrt_lasso(data: &DesignData, lambda: f64) -> Result<ScaleFit> {
    solve_sqrt_lasso_with(data, lambda, &SolverSettings::default())
}

pub fn solve_sqrt_lasso_with(data: &DesignData, lambda: f64, settings: &SolverSettings) -> Result<ScaleFit> {
    solve_scale_family(data, lambda, ScaleRule::SquareRoot, settings)
}

/// Scaled Lasso: `β̂(σ̃)` at the fixed point `σ̃² = ‖Y − Xβ̂‖²_n + λσ̃‖β̂‖₁`.
pub fn solve_scaled_lasso(data: &DesignData, lambda: f64) -> Result<ScaleFit> {
    solve_scaled_lasso_with(data, lambda, &SolverSettings::default())
}

pub fn solve_scaled_lasso_with(data: &DesignData, lambda: f64, settings: &SolverSettings) -> Result<ScaleFit> {
    solve_scale_family(data, lambda, ScaleRule::Scaled, settings)
}

fn solve_scale_family(data: &DesignData, lambda: f64, rule: ScaleRule, settings: &SolverSettings) -> Result<ScaleFit> {
    check_positive("λ", lambda)?;
    let out = scale_fixed_point(&quadratic_problem(data), lambda, rule, settings)?;
    let sigma = out.sigma;
    let base = LassoFit::from_coefficients(data, out.cd.beta, lambda, sigma)?.with_iterations(out.sweeps);
    let rss = base.rss();
    let l1 = l1_norm(base.beta.as_slice());
    let sigma_tilde_sq = rss + lambda * sigma * l1;
    let fixed_point_residual = match rule {
        ScaleRule::SquareRoot => (sigma * sigma - rss).abs(),
        ScaleRule::Scaled => (sigma * sigma - sigma_tilde_sq).abs(),
    };
    Ok(ScaleFit { base, sigma_hat_sq: rss, sigma_tilde_sq, fixed_point_residual, outer_iterations: out.outer })
}

/// Sup-norm violation of the Lasso KKT conditions at penalty level `λ_eff`.
pub fn kkt_certificate(data: &DesignData, fit: &LassoFit, lambda_eff: f64) -> Result<f64> {
    if fit.beta.len() != data.p() {
        return Err(Error::dim("fit and design disagree on p"));
    }
    let residual = data.residual(&fit.beta);
    Ok(kkt_from_gradient(&fit.beta, &correlation(data, &residual), lambda_eff))
}

/// `|Yᵀ(Y − Xβ̂)/n − ‖Y − Xβ̂‖²_n − λσ‖β̂‖₁|`, which vanishes at a converged
/// scale-parameterized fit.
pub fn penalized_rss_identity(data: &DesignData, fit: &LassoFit, lambda: f64, sigma: f64) -> Result<f64> {
    if fit.beta.len() != data.p() {
        return Err(Error::dim("fit and design disagree on p"));
    }
    let n = data.n() as f64;
    let residual = data.residual(&fit.beta);
    let lhs = data.y().dot(&residual) / n;
    let rhs = residual.norm_squared() / n + lambda * sigma * l1_norm(fit.beta.as_slice());
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn toy() -> DesignData {
        DesignData::new(
            Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]),
            Vector::from_vec(vec![3.0, 1.0]),
        )
        .unwrap()
    }

    fn random_data(n: usize, p: usize, seed: u64) -> DesignData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let mut beta = Vector::zeros(p);
        beta[0] = 1.0;
        beta[1] = -0.5;
        let noise = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let y = &x * &beta + noise;
        DesignData::new(x, y).unwrap()
    }

    fn soft_threshold_oracle(z: &[f64], t: f64) -> Vec<f64> {
        z.iter().map(|&v| v.signum() * (v.abs() - t).max(0.0)).collect()
    }

    #[test]
    fn orthonormal_toy_matches_soft_thresholding() {
        let fit = solve_lasso(&toy(), 0.5).unwrap();
        assert_eq!(fit.beta().as_slice(), soft_threshold_oracle(&[2.0, 1.0], 0.5).as_slice());
        assert_eq!(fit.beta().as_slice(), &[1.5, 0.5]);
        assert!(fit.kkt_violation() <= 1e-10);
        assert_eq!(fit.z().as_slice(), &[1.0, 1.0]);

        let zero = solve_lasso(&toy(), 2.0).unwrap();
        assert_eq!(zero.beta().as_slice(), &[0.0, 0.0]);
        assert_eq!(kkt_certificate(&toy(), &zero, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn tiny_penalty_approaches_least_squares() {
        let data = random_data(30, 4, 3);
        let fit = solve_lasso(&data, 1e-9).unwrap();
        let ols = data.gram().inverse().unwrap() * data.xty();
        assert!((fit.beta() - ols).amax() < 1e-6);
    }

    #[test]
    fn scaled_form_is_plain_lasso_at_product_penalty() {
        let fit = solve_lasso_scaled(&toy(), 0.5, 2.0).unwrap();
        assert_eq!(fit.beta().as_slice(), &[1.0, 0.0]);
        assert!((fit.lambda_eff() - 1.0).abs() < 1e-15);

        let data = random_data(40, 8, 11);
        let a = solve_lasso_scaled(&data, 0.1, 1.7).unwrap();
        let b = solve_lasso(&data, 0.1 * 1.7).unwrap();
        assert_eq!(a.beta().as_slice(), b.beta().as_slice());
        let c = solve_lasso_scaled(&data, 0.1, 1.0).unwrap();
        let d = solve_lasso(&data, 0.1).unwrap();
        assert_eq!(c.beta().as_slice(), d.beta().as_slice());
    }

    #[test]
    fn kkt_certificate_detects_perturbation() {
        let data = toy();
        let fit = solve_lasso(&data, 0.5).unwrap();
        assert!(kkt_certificate(&data, &fit, 0.5).unwrap() <= 1e-10);
        let mut beta = fit.beta().clone();
        beta[0] += 0.1;
        let moved = LassoFit::from_coefficients(&data, beta, 0.5, 0.0).unwrap();
        let v = kkt_certificate(&data, &moved, 0.5).unwrap();
        assert!((v - 0.1).abs() < 1e-12 && v > 1e-3);
    }

    #[test]
    fn sqrt_lasso_zero_regime() {
        let lambda = 2.0 / 5f64.sqrt();
        let fit = solve_sqrt_lasso(&toy(), lambda + 1e-9).unwrap();
        assert_eq!(fit.beta().as_slice(), &[0.0, 0.0]);
        assert!((fit.sigma_hat() - 5f64.sqrt()).abs() < 1e-12);
        assert!(fit.base().kkt_violation() <= 1e-8);
    }

    /// Minimizes the square-root objective over the one-parameter family
    /// `β̂(σ)` by grid search plus golden-section refinement.
    fn sqrt_grid_oracle(data: &DesignData, lambda: f64) -> Vector {
        let ynorm = (data.y().norm_squared() / data.n() as f64).sqrt();
        let objective = |s: f64| {
            let fit = solve_lasso(data, lambda * s).unwrap();
            (fit.rss().sqrt() + lambda * l1_norm(fit.beta().as_slice()), fit.into_beta())
        };
        let grid: Vec<f64> = (0..=400).map(|k| 1e-3 + (2.0 * ynorm - 1e-3) * k as f64 / 400.0).collect();
        let best = grid
            .iter()
            .enumerate()
            .min_by(|a, b| objective(*a.1).0.total_cmp(&objective(*b.1).0))
            .unwrap()
            .0;
        let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(400)]);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..80 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if objective(a).0 < objective(b).0 {
                hi = b;
            } else {
                lo = a;
            }
        }
        objective(0.5 * (lo + hi)).1
    }

    #[test]
    fn sqrt_lasso_matches_grid_search() {
        let data = random_data(20, 5, 7);
        let lambda = 0.3;
        let fit = solve_sqrt_lasso(&data, lambda).unwrap();
        assert!(fit.fixed_point_residual() <= 1e-8);
        assert!(fit.base().kkt_violation() <= 1e-8);
        let oracle = sqrt_grid_oracle(&data, lambda);
        assert!((fit.beta() - oracle).amax() < 1e-4);
    }

    #[test]
    fn scaled_lasso_fixed_point_and_ordering() {
        let data = random_data(30, 10, 5);
        let fit = solve_scaled_lasso(&data, 0.3).unwrap();
        let st = fit.sigma_tilde();
        let direct = (st * st - fit.base().rss() - 0.3 * st * l1_norm(fit.beta().as_slice())).abs();
        assert!(direct <= 1e-8);
        assert!(fit.fixed_point_residual() <= 1e-8);
        assert!(fit.sigma_hat_sq() <= fit.sigma_tilde_sq());
        assert!((fit.base().sigma() - st).abs() < 1e-9);

        let big = solve_scaled_lasso(&data, 100.0).unwrap();
        let yy = data.y().norm_squared() / 30.0;
        assert_eq!(l1_norm(big.beta().as_slice()), 0.0);
        assert!((big.sigma_tilde_sq() - yy).abs() < 1e-10);
    }

    #[test]
    fn normal_equation_identity() {
        let data = toy();
        let fit = solve_lasso_scaled(&data, 0.5, 2.0).unwrap();
        assert!(penalized_rss_identity(&data, &fit, 0.5, 2.0).unwrap() <= 1e-10);
        let zero = LassoFit::from_coefficients(&data, Vector::zeros(2), 1.0, 1.0).unwrap();
        assert_eq!(penalized_rss_identity(&data, &zero, 1.0, 1.0).unwrap(), 0.0);

        let data = random_data(50, 20, 9);
        let fit = solve_lasso_scaled(&data, 0.2, 0.8).unwrap();
        assert!(penalized_rss_identity(&data, &fit, 0.2, 0.8).unwrap() <= 1e-8);
    }

    #[test]
    fn degenerate_scale_is_an_error() {
        let x = Matrix::identity(3, 3);
        let data = DesignData::new(x, Vector::zeros(3)).unwrap();
        assert!(matches!(solve_sqrt_lasso(&data, 0.1), Err(Error::DegenerateScale { .. })));
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        assert!(matches!(solve_lasso(&toy(), 0.0), Err(Error::Domain(_))));
        assert!(matches!(solve_lasso_scaled(&toy(), 1.0, -1.0), Err(Error::Domain(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn fits_satisfy_kkt_and_scale_identities(seed in 0u64..1000, lambda in 0.02f64..1.0) {
                let data = random_data(25, 6, seed);
                let fit = solve_lasso(&data, lambda).unwrap();
                prop_assert!(fit.kkt_violation() <= 1e-8);
                prop_assert!(fit.z().amax() <= 1.0 + 1e-12);
                for (b, z) in fit.beta().iter().zip(fit.z().iter()) {
                    if *b != 0.0 { prop_assert_eq!(b.signum(), *z); }
                }
                let sq = solve_scaled_lasso(&data, lambda).unwrap();
                prop_assert!(sq.fixed_point_residual() <= 1e-8);
                prop_assert!(sq.sigma_hat_sq() <= sq.sigma_tilde_sq() + 1e-15);
                let sl = sq.base();
                prop_assert!(penalized_rss_identity(&data, sl, lambda, sl.sigma()).unwrap() <= 1e-8);
                let rt = solve_sqrt_lasso(&data, lambda).unwrap();
                prop_assert!(rt.fixed_point_residual() <= 1e-8);
                prop_assert!(rt.base().kkt_violation() <= 1e-8);
            }
        }
    }
}
