//! De-sparsified inference and precision-matrix estimation.

mod desparsified;
mod nodewise;
mod precision;

pub use desparsified::{
    confidence_intervals, desparsify, initial_estimate, sqnorm_linearity_check, two_sided_quantile,
    DesparsifiedResult, LinearityCheck, ScaleSource,
};
pub use nodewise::{default_nodewise_lambda, nodewise_sqrt_lasso, NodewiseInverse};
pub use precision::{
    desparsified_graphical, desparsified_nodewise_precision, desparsify_nodewise, graphical_kkt, graphical_lasso,
    graphical_lasso_with, nodewise_estimate, precision_smallp, recover_z, Decomposition, GraphicalSettings,
    PrecisionEstimate, PrecisionMethod,
};

use serde::{Deserialize, Serialize};

use crate::compat::{supnorm_report, BoundReport};
use crate::error::{Error, Result};
use crate::linalg::{invert_symmetric, DesignData, Matrix, Vector};

/// Equal-correlation precision matrix with its `ℓ1`-operator norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EqualCorrelation {
    pub sigma0: Matrix,
    pub theta0: Matrix,
    /// `(1/(1−ρ))·(1 + (2p−3)ρ)/(1 + (p−1)ρ)`.
    pub l1_norm: f64,
    /// `2/(1−ρ)`.
    pub bound: f64,
}

/// `Σ₀ = (1−ρ)I + ριιᵀ` and `Θ₀ = (1/(1−ρ))(I − ριιᵀ/(1−ρ+pρ))`.
pub fn equal_correlation_theta(p: usize, rho: f64) -> Result<EqualCorrelation> {
    if p < 2 {
        return Err(Error::domain(format!("p must be at least 2, got {p}")));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::domain(format!("ρ must lie in [0, 1), got {rho}")));
    }
    let pf = p as f64;
    let sigma0 = Matrix::from_fn(p, p, |j, k| if j == k { 1.0 } else { rho });
    let c = rho / (1.0 - rho + pf * rho);
    let theta0 = Matrix::from_fn(p, p, |j, k| ((if j == k { 1.0 } else { 0.0 }) - c) / (1.0 - rho));
    let l1_norm = (1.0 + (2.0 * pf - 3.0) * rho) / ((1.0 + (pf - 1.0) * rho) * (1.0 - rho));
    Ok(EqualCorrelation { sigma0, theta0, l1_norm, bound: 2.0 / (1.0 - rho) })
}

/// `‖β̂ − β⁰‖_∞ ≤ ‖Θ₀Xᵀε‖_∞/n + |||Θ₀|||₁(‖Σ̂ − Σ₀‖_∞‖β̂ − β⁰‖₁ + λ)` for
/// the Lasso with penalty `2λ‖β‖₁`; `Σ₀ = Θ₀⁻¹`.
pub fn supnorm_bias_bound(
    theta0: &Matrix,
    x: &Matrix,
    eps: &Vector,
    lambda: f64,
    beta_hat: &Vector,
    beta0: &Vector,
) -> Result<BoundReport> {
    let sigma0 = invert_symmetric(theta0)?;
    let data = DesignData::new(x.clone(), eps.clone())?;
    if eps.len() != x.nrows() {
        return Err(Error::dim("ε and X disagree on n"));
    }
    supnorm_report(&data, theta0, &sigma0, eps, lambda, beta_hat, beta0)
}
