//! Fixed-point iteration on the noise scale shared by the square-root and
//! scaled Lasso.
//!
//! Both estimators are a scale-parameterized Lasso `β̂(σ)` (penalty `2λσ‖β‖₁`)
//! evaluated at a stable point of a scale map:
//!
//! * square-root Lasso: `σ ↦ ‖Y − Xβ̂(σ)‖_n`
//! * scaled Lasso: `σ ↦` the positive root of `s² = ‖Y − Xβ̂(σ)‖²_n + λs‖β̂(σ)‖₁`

use super::cd::{coordinate_descent, CdOutcome, CdSettings, QuadraticProblem};
use super::SIGMA_MIN;
use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ScaleRule {
    SquareRoot,
    Scaled,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub cd: CdSettings,
    /// Stop once successive scale iterates differ by less than this.
    pub scale_tol: f64,
    pub max_outer: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            cd: CdSettings::default(),
            scale_tol: 1e-10,
            max_outer: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ScaleOutcome {
    pub cd: CdOutcome,
    /// Scale at which `cd.beta` is the Lasso solution.
    pub sigma: f64,
    pub outer: usize,
    pub sweeps: usize,
}

fn target(rule: ScaleRule, lambda: f64, rss: f64, l1: f64) -> f64 {
    match rule {
        ScaleRule::SquareRoot => rss.sqrt(),
        ScaleRule::Scaled => {
            let b = lambda * l1;
            0.5 * (b + (b * b + 4.0 * rss).sqrt())
        }
    }
}

pub(crate) fn scale_fixed_point(
    problem: &QuadraticProblem,
    lambda: f64,
    rule: ScaleRule,
    settings: &SolverSettings,
) -> Result<ScaleOutcome> {
    let mut sigma = problem.yy().max(0.0).sqrt();
    if sigma < SIGMA_MIN {
        return Err(Error::DegenerateScale { sigma, node: None });
    }
    let mut warm: Option<Vector> = None;
    let mut sweeps = 0;
    let mut last_step = 0.0f64;
    let mut damped = false;

    for outer in 1..=settings.max_outer {
        let cd = coordinate_descent(problem, lambda * sigma, warm.take(), &settings.cd)?;
        sweeps += cd.sweeps;
        let rss = problem.rss_from_gradient(&cd.beta, &cd.grad);
        let l1 = cd.beta.iter().map(|b| b.abs()).sum::<f64>();
        let proposal = target(rule, lambda, rss, l1);
        if proposal < SIGMA_MIN {
            return Err(Error::DegenerateScale { sigma: proposal, node: None });
        }

        let mut step = proposal - sigma;
        if step * last_step < 0.0 {
            damped = true;
        }
        if damped {
            step *= 0.5;
        }
        last_step = step;

        if step.abs() < settings.scale_tol {
            let next = sigma + step;
            let cd = coordinate_descent(problem, lambda * next, Some(cd.beta), &settings.cd)?;
            sweeps += cd.sweeps;
            return Ok(ScaleOutcome { cd, sigma: next, outer, sweeps });
        }
        sigma += step;
        warm = Some(cd.beta);
    }

    Err(Error::Convergence {
        iterations: settings.max_outer,
        violation: last_step.abs(),
        last_iterate: warm.map(|b| b.as_slice().to_vec()).unwrap_or_default(),
    })
}
