//! De-sparsified Lasso `b̂ = β̂ + Θ̂ᵀXᵀ(Y − Xβ̂)/n`, its linear expansion and
//! normal confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::nodewise::NodewiseInverse;
use crate::error::{Error, Result};
use crate::linalg::{l1_norm, DesignData, Matrix, Vector};
use crate::solvers::{solve_lasso_scaled, solve_scaled_lasso, solve_sqrt_lasso, LassoFit};

/// Source of the noise scale used to studentize.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleSource {
    /// Scaled Lasso: `β̂` and `σ̃` from the same fit.
    Scaled,
    /// Square-root Lasso: `β̂` and `σ̂ = ‖Y − Xβ̂‖_n`.
    SquareRoot,
    /// Scaled-Lasso `β̂`, studentized with its residual scale `‖Y − Xβ̂‖_n`.
    #[default]
    ScaledResidual,
    /// Lasso at the known scale, studentized with it.
    Known(f64),
}

/// Fits `β̂` at scale-free level `λ` and returns it with the studentizing scale.
pub fn initial_estimate(data: &DesignData, lambda: f64, source: ScaleSource) -> Result<(LassoFit, f64)> {
    match source {
        ScaleSource::Scaled => {
            let f = solve_scaled_lasso(data, lambda)?;
            let s = f.sigma_tilde();
            Ok((f.into_base(), s))
        }
        ScaleSource::SquareRoot => {
            let f = solve_sqrt_lasso(data, lambda)?;
            let s = f.sigma_hat();
            Ok((f.into_base(), s))
        }
        ScaleSource::ScaledResidual => {
            let f = solve_scaled_lasso(data, lambda)?;
            let s = f.sigma_hat();
            Ok((f.into_base(), s))
        }
        ScaleSource::Known(sigma) => Ok((solve_lasso_scaled(data, lambda, sigma)?, sigma)),
    }
}

fn check_dims(data: &DesignData, beta: &Vector, theta: &NodewiseInverse) -> Result<()> {
    if beta.len() != data.p() || theta.p() != data.p() {
        return Err(Error::dim("fit, surrogate inverse and design disagree on p"));
    }
    Ok(())
}

/// `b̂ = β̂ + Θ̂ᵀXᵀ(Y − Xβ̂)/n`.
pub fn desparsify(data: &DesignData, fit: &LassoFit, theta: &NodewiseInverse) -> Result<Vector> {
    check_dims(data, fit.beta(), theta)?;
    let score = data.x().tr_mul(&data.residual(fit.beta())) / data.n() as f64;
    Ok(fit.beta() + theta.theta.tr_mul(&score))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesparsifiedResult {
    pub b_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub level: f64,
    /// Normal quantile at `1 − (1 − level)/2`.
    pub z: f64,
    /// `λ̲‖β̂ − β⁰‖₁` once β⁰ is supplied.
    pub remainder_bound: Option<f64>,
    pub sigma_used: f64,
    /// `τ̃_j²/τ̂_j`, the factor turning `b̂_j − β⁰_j` into the linear scale.
    pub scale_factor: Vec<f64>,
}

impl DesparsifiedResult {
    pub fn covers(&self, beta0: &[f64]) -> Vec<bool> {
        beta0
            .iter()
            .enumerate()
            .map(|(j, &b)| self.ci_lower[j] <= b && b <= self.ci_upper[j])
            .collect()
    }

    /// `√n(b̂_j − β⁰_j)/(σ̂τ̂_j/τ̃_j²)` for every `j`.
    pub fn studentized(&self, beta0: &[f64]) -> Vec<f64> {
        beta0.iter().enumerate().map(|(j, &b)| (self.b_hat[j] - b) / self.se[j]).collect()
    }

    pub fn with_remainder_bound(mut self, lambda: f64, beta_hat: &Vector, beta0: &Vector) -> Self {
        self.remainder_bound = Some(lambda * l1_norm((beta_hat - beta0).as_slice()));
        self
    }
}

/// Normal quantile `z_{1−α/2}` for a two-sided interval at `level = 1 − α`.
pub fn two_sided_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("level must lie in (0, 1), got {level}")));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

/// Intervals `b̂_j ± z·σ̂τ̂_j/(τ̃_j²√n)`.
pub fn confidence_intervals(
    b_hat: &Vector,
    theta: &NodewiseInverse,
    sigma_hat: f64,
    n: usize,
    level: f64,
) -> Result<DesparsifiedResult> {
    let z = two_sided_quantile(level)?;
    if !(sigma_hat > 0.0) || !sigma_hat.is_finite() {
        return Err(Error::domain(format!("σ̂ must be positive, got {sigma_hat}")));
    }
    if n == 0 {
        return Err(Error::domain("n must be positive"));
    }
    if b_hat.len() != theta.p() {
        return Err(Error::dim("b̂ and surrogate inverse disagree on p"));
    }
    let root_n = (n as f64).sqrt();
    let p = b_hat.len();
    let scale_factor: Vec<f64> = (0..p).map(|j| theta.tau_tilde_sq[j] / theta.tau_hat(j)).collect();
    let se: Vec<f64> = scale_factor.iter().map(|f| sigma_hat / (f * root_n)).collect();
    let ci_lower = (0..p).map(|j| b_hat[j] - z * se[j]).collect();
    let ci_upper = (0..p).map(|j| b_hat[j] + z * se[j]).collect();
    Ok(DesparsifiedResult {
        b_hat: b_hat.as_slice().to_vec(),
        se,
        ci_lower,
        ci_upper,
        level,
        z,
        remainder_bound: None,
        sigma_used: sigma_hat,
        scale_factor,
    })
}

/// Term-by-term linear expansion
/// `(τ̃_j²/τ̂_j)(b̂_j − β⁰_j) = v_jᵀε/n + rem_j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearityCheck {
    /// Column `j` is `v_j = (τ̃_j²/τ̂_j)XΘ̂_j`.
    pub v: Matrix,
    pub v_norms: Vec<f64>,
    pub rem: Vec<f64>,
    /// `λ̲‖β̂ − β⁰‖₁`.
    pub bound: f64,
    /// Some `|‖v_j‖_n − 1| > 1e−8` or `|rem_j| > bound + 1e−10`.
    pub violation: bool,
}

impl LinearityCheck {
    pub fn max_norm_defect(&self) -> f64 {
        self.v_norms.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn max_rem(&self) -> f64 {
        self.rem.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }
}

pub fn sqnorm_linearity_check(
    data: &DesignData,
    beta0: &Vector,
    eps: &Vector,
    fit: &LassoFit,
    theta: &NodewiseInverse,
) -> Result<LinearityCheck> {
    check_dims(data, fit.beta(), theta)?;
    if beta0.len() != data.p() || eps.len() != data.n() {
        return Err(Error::dim("β⁰ or ε has the wrong length"));
    }
    let x = data.x();
    let n = data.n() as f64;
    let model = x * beta0 + eps;
    let scale = 1.0 + data.y().amax();
    if (&model - data.y()).amax() > 1e-10 * scale {
        return Err(Error::domain("Y differs from Xβ⁰ + ε"));
    }
    let b_hat = desparsify(data, fit, theta)?;
    let p = data.p();
    let mut v = x * &theta.theta;
    let mut v_norms = Vec::with_capacity(p);
    let mut rem = Vec::with_capacity(p);
    for j in 0..p {
        let f = theta.tau_tilde_sq[j] / theta.tau_hat(j);
        let mut col = v.column_mut(j);
        col *= f;
        v_norms.push((col.norm_squared() / n).sqrt());
        let linear = col.dot(eps) / n;
        rem.push(f * (b_hat[j] - beta0[j]) - linear);
    }
    let bound = theta.lambda * l1_norm((fit.beta() - beta0).as_slice());
    let violation =
        v_norms.iter().any(|v| (v - 1.0).abs() > 1e-8) || rem.iter().any(|r| r.abs() > bound + 1e-10);
    Ok(LinearityCheck { v, v_norms, rem, bound, violation })
}
