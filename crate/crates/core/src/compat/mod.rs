//! Compatibility constants, oracle-inequality evaluators and the noise-level
//! quantities they are calibrated with.

mod bounds;
mod compatibility;
mod restricted;

pub use bounds::{evaluate_bound, BoundInputs, BoundReport, TheoremId, ETA, HOLD_TOL};
pub use compatibility::{
    compatibility_constant, compatibility_objective, project_l1_ball, project_simplex, CompatMethod,
    CompatSettings, CompatibilityResult,
};
pub use restricted::{ell1_restricted_oracle, RestrictedOracle, MAX_SUPPORT_CAP};

pub(crate) use bounds::supnorm_report;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Realized noise level `‖εᵀX‖_∞/n`.
pub fn lambda_max_noise(x: &Matrix, eps: &Vector) -> Result<f64> {
    if x.nrows() != eps.len() {
        return Err(Error::dim(format!("X has {} rows but ε has length {}", x.nrows(), eps.len())));
    }
    Ok(x.tr_mul(eps).amax() / x.nrows() as f64)
}

/// `√(2(log(2p) + a)/n)`, the level exceeded by the maximum of `p`
/// standardized averages with probability at most `e^{−a}`.
pub fn theoretical_lambda(n: usize, p: usize, a: f64) -> Result<f64> {
    if n == 0 || p == 0 {
        return Err(Error::domain("n and p must be at least 1"));
    }
    if !(a >= 0.0) {
        return Err(Error::domain(format!("a must be nonnegative, got {a}")));
    }
    Ok((2.0 * ((2.0 * p as f64).ln() + a) / n as f64).sqrt())
}
