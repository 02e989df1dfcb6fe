//! Evaluation of both sides of the oracle inequalities for a realized fit.
//!
//! Conventions: `a = ‖X(β̂ − β⁰)‖²_n`, `c = ‖X(β − β⁰)‖²_n` for the
//! caller's candidate `β` with active set `S`, and `η = √2 − 1`. For the
//! square-root variants the noise level `lambda_eps` is read as `λ₀`, scaled
//! so that `λ₀‖ε‖_n ≥ ‖εᵀX‖_∞/n`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::compatibility::{compatibility_constant, CompatSettings};
use super::restricted::ell1_restricted_oracle;
use super::lambda_max_noise;
use crate::error::Result;
use crate::linalg::{l1_norm, l1_operator_norm, linf_norm, norm_n, sup_norm, DesignData, IndexSet, Matrix, Vector};

/// `√2 − 1`.
pub const ETA: f64 = std::f64::consts::SQRT_2 - 1.0;

/// Slack on `lhs ≤ rhs`.
pub const HOLD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremId {
    LassoPrediction,
    LassoEll1,
    Ell1RestrictedCorollary,
    SqrtPredictionProp,
    SqrtPredictionThm,
    SqrtEll1Thm,
    Supnorm,
}

impl TheoremId {
    pub const ALL: [TheoremId; 7] = [
        TheoremId::LassoPrediction,
        TheoremId::LassoEll1,
        TheoremId::Ell1RestrictedCorollary,
        TheoremId::SqrtPredictionProp,
        TheoremId::SqrtPredictionThm,
        TheoremId::SqrtEll1Thm,
        TheoremId::Supnorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TheoremId::LassoPrediction => "lasso-prediction",
            TheoremId::LassoEll1 => "lasso-ell1",
            TheoremId::Ell1RestrictedCorollary => "ell1-restricted-corollary",
            TheoremId::SqrtPredictionProp => "sqrt-prediction-prop",
            TheoremId::SqrtPredictionThm => "sqrt-prediction-thm",
            TheoremId::SqrtEll1Thm => "sqrt-ell1-thm",
            TheoremId::Supnorm => "supnorm",
        }
    }
}

impl std::fmt::Display for TheoremId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TheoremId {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| crate::error::Error::domain(format!("unknown theorem id {s:?}")))
    }
}

/// Both sides of one inequality. When `applicable` is false the sides are
/// not evaluated and `reason` names the failed precondition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem_id: TheoremId,
    pub applicable: bool,
    pub reason: Option<String>,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub inputs: BTreeMap<String, f64>,
}

impl BoundReport {
    pub(crate) fn evaluated(theorem_id: TheoremId, lhs: f64, rhs: f64, inputs: BTreeMap<String, f64>) -> Self {
        Self { theorem_id, applicable: true, reason: None, lhs, rhs, holds: lhs <= rhs + HOLD_TOL, inputs }
    }

    pub(crate) fn inapplicable(theorem_id: TheoremId, reason: impl Into<String>, inputs: BTreeMap<String, f64>) -> Self {
        Self {
            theorem_id,
            applicable: false,
            reason: Some(reason.into()),
            lhs: f64::NAN,
            rhs: f64::NAN,
            holds: false,
            inputs,
        }
    }
}

/// Everything an inequality may need; unused fields are ignored.
#[derive(Debug, Clone)]
pub struct BoundInputs<'a> {
    pub data: &'a DesignData,
    pub beta0: &'a Vector,
    pub eps: &'a Vector,
    /// Estimate the inequality is about (Lasso or square-root Lasso).
    pub beta_hat: &'a Vector,
    /// Oracle candidate `β` on the right-hand side.
    pub candidate: &'a Vector,
    pub lambda: f64,
    /// `λ_ε` for the Lasso results, `λ₀` for the square-root results.
    pub lambda_eps: f64,
    pub delta: f64,
    /// Population precision and covariance, needed by `Supnorm`.
    pub theta0: Option<&'a Matrix>,
    pub sigma0: Option<&'a Matrix>,
    /// Support cap for the restricted oracle of the corollary.
    pub support_cap: usize,
    pub compat: CompatSettings,
    /// Stop the compatibility search once the inequality is established.
    pub early_exit: bool,
}

struct Common {
    a: f64,
    c: f64,
    err_l1: f64,
    cand_l1: f64,
    s: IndexSet,
    noise: f64,
    eps_n: f64,
}

fn common(inp: &BoundInputs<'_>) -> Result<Common> {
    let x = inp.data.x();
    let n = inp.data.n() as f64;
    let d_hat = inp.beta_hat - inp.beta0;
    let d_cand = inp.candidate - inp.beta0;
    Ok(Common {
        a: (x * &d_hat).norm_squared() / n,
        c: (x * &d_cand).norm_squared() / n,
        err_l1: l1_norm(d_hat.as_slice()),
        cand_l1: l1_norm(d_cand.as_slice()),
        s: IndexSet::support(inp.candidate),
        noise: lambda_max_noise(x, inp.eps)?,
        eps_n: norm_n(inp.eps.as_slice())?,
    })
}

/// `rest + coef·|S|/φ̂²(L, S)`; the sparsity term is zero for empty `S`.
///
/// With `early_exit` the compatibility search stops once its objective is
/// small enough for `lhs ≤ rhs`; the returned right-hand side is then a lower
/// bound on the exact one, which suffices to certify the inequality.
#[allow(clippy::too_many_arguments)]
fn sparsity_rhs(
    inp: &BoundInputs<'_>,
    l: f64,
    s: &IndexSet,
    inputs: &mut BTreeMap<String, f64>,
    rest: f64,
    coef: f64,
    lhs: f64,
) -> Result<f64> {
    inputs.insert("L".into(), l);
    inputs.insert("support_size".into(), s.len() as f64);
    if s.is_empty() {
        return Ok(rest);
    }
    let k = s.len() as f64;
    let mut settings = inp.compat;
    if inp.early_exit {
        let slack = lhs - rest;
        settings.target = Some(if slack > 0.0 { coef * k / slack } else { f64::INFINITY });
    }
    let r = compatibility_constant(&inp.data.gram(), l, s, &settings)?;
    inputs.insert("phi_sq".into(), r.value);
    inputs.insert("phi_sq_gap".into(), r.max_orthant_gap);
    inputs.insert("phi_sq_certified".into(), if r.certified { 1.0 } else { 0.0 });
    // A vanishing constant makes the right-hand side infinite.
    Ok(if r.value > 0.0 { rest + coef * k / r.value } else { f64::INFINITY })
}

/// `a ≥ b` up to rounding in the last few bits.
fn dominates(a: f64, b: f64) -> bool {
    a >= b * (1.0 - 1e-12)
}

/// Evaluates one inequality on a realized fit.
pub fn evaluate_bound(theorem: TheoremId, inp: &BoundInputs<'_>) -> Result<BoundReport> {
    let cm = common(inp)?;
    let (lambda, le, delta) = (inp.lambda, inp.lambda_eps, inp.delta);
    let mut inputs: BTreeMap<String, f64> = BTreeMap::new();
    inputs.insert("lambda".into(), lambda);
    inputs.insert("lambda_eps".into(), le);
    inputs.insert("noise_sup".into(), cm.noise);
    inputs.insert("pred_error".into(), cm.a);
    inputs.insert("approx_error".into(), cm.c);
    let na = |reason: String, inputs| Ok(BoundReport::inapplicable(theorem, reason, inputs));

    match theorem {
        TheoremId::LassoPrediction | TheoremId::LassoEll1 | TheoremId::Ell1RestrictedCorollary => {
            if !dominates(le, cm.noise) {
                return na(format!("λ_ε = {le} is below ‖εᵀX‖_∞/n = {}", cm.noise), inputs);
            }
            if lambda <= le {
                return na(format!("λ = {lambda} does not exceed λ_ε = {le}"), inputs);
            }
            let gap = lambda - le;
            if theorem == TheoremId::LassoPrediction {
                let l = (lambda + le) / gap;
                let rhs = sparsity_rhs(inp, l, &cm.s, &mut inputs, cm.c, (lambda + le).powi(2), cm.a)?;
                return Ok(BoundReport::evaluated(theorem, cm.a, rhs, inputs));
            }
            if !(0.0..1.0).contains(&delta) {
                return na(format!("δ = {delta} is outside [0, 1)"), inputs);
            }
            inputs.insert("delta".into(), delta);
            let lam_star = lambda + le + delta * gap;
            let l = lam_star / ((1.0 - delta) * gap);
            let lhs = 2.0 * delta * gap * cm.err_l1 + cm.a;
            if theorem == TheoremId::LassoEll1 {
                let rest = 2.0 * delta * gap * cm.cand_l1 + cm.c;
                let rhs = sparsity_rhs(inp, l, &cm.s, &mut inputs, rest, lam_star.powi(2), lhs)?;
                return Ok(BoundReport::evaluated(theorem, lhs, rhs, inputs));
            }
            let oracle = ell1_restricted_oracle(inp.data, inp.beta0, lam_star, l, inp.support_cap, &inp.compat)?;
            inputs.insert("lambda_star".into(), lam_star);
            inputs.insert("oracle_approx_error".into(), oracle.approximation_error);
            let outer = lambda + le + 3.0 * delta * gap;
            let rest = outer / lam_star * oracle.approximation_error;
            let rhs = sparsity_rhs(inp, l, &oracle.support, &mut inputs, rest, outer * lam_star, lhs)?;
            Ok(BoundReport::evaluated(theorem, lhs, rhs, inputs))
        }
        TheoremId::SqrtPredictionProp => {
            let eps_hat_n = norm_n(inp.data.residual(inp.beta_hat).as_slice())?;
            inputs.insert("eps_n".into(), cm.eps_n);
            inputs.insert("eps_hat_n".into(), eps_hat_n);
            if !dominates(le * cm.eps_n, cm.noise) {
                return na(format!("λ₀‖ε‖_n = {} is below ‖εᵀX‖_∞/n = {}", le * cm.eps_n, cm.noise), inputs);
            }
            if eps_hat_n <= 0.0 {
                return na("residual norm is zero".into(), inputs);
            }
            let lh0 = le * cm.eps_n / eps_hat_n;
            inputs.insert("lambda_hat0".into(), lh0);
            if lambda <= lh0 {
                return na(format!("λ = {lambda} does not exceed λ̂₀ = {lh0}"), inputs);
            }
            let l = (lambda + lh0) / (lambda - lh0);
            let coef = (lambda + lh0).powi(2) * eps_hat_n * eps_hat_n;
            let rhs = sparsity_rhs(inp, l, &cm.s, &mut inputs, cm.c, coef, cm.a)?;
            Ok(BoundReport::evaluated(theorem, cm.a, rhs, inputs))
        }
        TheoremId::SqrtPredictionThm | TheoremId::SqrtEll1Thm => {
            inputs.insert("eps_n".into(), cm.eps_n);
            inputs.insert("eta".into(), ETA);
            if !(le > 0.0) || !dominates(le * cm.eps_n, cm.noise) {
                return na(format!("λ₀‖ε‖_n = {} is below ‖εᵀX‖_∞/n = {}", le * cm.eps_n, cm.noise), inputs);
            }
            let le_eta = lambda * ETA;
            if le_eta <= le {
                return na(format!("λη = {le_eta} does not exceed λ₀ = {le}"), inputs);
            }
            let cap = cm.eps_n * (le_eta - le) / (2.0 * le * lambda);
            let b0 = l1_norm(inp.beta0.as_slice());
            inputs.insert("beta0_l1".into(), b0);
            inputs.insert("beta0_l1_cap".into(), cap);
            if b0 > cap {
                return na(format!("‖β⁰‖₁ = {b0} exceeds {cap}"), inputs);
            }
            let gap = le_eta - le;
            let growth = ((le_eta + le) / (2.0 * le)).powi(2) * cm.eps_n * cm.eps_n;
            if theorem == TheoremId::SqrtPredictionThm {
                let l = (le_eta + le) / gap;
                let coef = ((le_eta + le) / ETA).powi(2) * growth;
                let rhs = sparsity_rhs(inp, l, &cm.s, &mut inputs, cm.c, coef, cm.a)?;
                return Ok(BoundReport::evaluated(theorem, cm.a, rhs, inputs));
            }
            if !(0.0..1.0).contains(&delta) {
                return na(format!("δ = {delta} is outside [0, 1)"), inputs);
            }
            inputs.insert("delta".into(), delta);
            let top = le_eta + le + delta * gap;
            let l = top / ((1.0 - delta) * gap);
            let w = 2.0 * delta * gap * cm.eps_n;
            let lhs = w * cm.err_l1 + cm.a;
            let coef = (top / ETA).powi(2) * growth;
            let rhs = sparsity_rhs(inp, l, &cm.s, &mut inputs, w * cm.cand_l1 + cm.c, coef, lhs)?;
            Ok(BoundReport::evaluated(theorem, lhs, rhs, inputs))
        }
        TheoremId::Supnorm => {
            let (Some(theta0), Some(sigma0)) = (inp.theta0, inp.sigma0) else {
                return na("population Θ₀ and Σ₀ are required".into(), inputs);
            };
            supnorm_report(inp.data, theta0, sigma0, inp.eps, lambda, inp.beta_hat, inp.beta0)
        }
    }
}

/// `‖β̂ − β⁰‖_∞ ≤ ‖Θ₀Xᵀε‖_∞/n + |||Θ₀|||₁(‖Σ̂ − Σ₀‖_∞‖β̂ − β⁰‖₁ + λ)`.
pub(crate) fn supnorm_report(
    data: &DesignData,
    theta0: &Matrix,
    sigma0: &Matrix,
    eps: &Vector,
    lambda: f64,
    beta_hat: &Vector,
    beta0: &Vector,
) -> Result<BoundReport> {
    let p = data.p();
    if theta0.shape() != (p, p) || sigma0.shape() != (p, p) || beta_hat.len() != p || beta0.len() != p {
        return Err(crate::error::Error::dim("supnorm inputs disagree on p"));
    }
    if eps.len() != data.n() {
        return Err(crate::error::Error::dim("ε and design disagree on n"));
    }
    let n = data.n() as f64;
    let x = data.x();
    let d = beta_hat - beta0;
    let linear = linf_norm((theta0 * (x.tr_mul(eps) / n)).as_slice());
    let theta_l1 = l1_operator_norm(theta0);
    let w = sup_norm(&(data.gram().into_inner() - sigma0));
    let bias = theta_l1 * (w * l1_norm(d.as_slice()) + lambda);
    let mut inputs = BTreeMap::new();
    inputs.insert("lambda".into(), lambda);
    inputs.insert("linear_term".into(), linear);
    inputs.insert("theta0_l1".into(), theta_l1);
    inputs.insert("gram_deviation_sup".into(), w);
    inputs.insert("bias_term".into(), bias);
    Ok(BoundReport::evaluated(TheoremId::Supnorm, linf_norm(d.as_slice()), linear + bias, inputs))
}
