//! Cyclic coordinate descent for the Lasso in covariance form.
//!
//! Minimizes `½βᵀΣβ − βᵀc + λ‖β‖₁`, which is half of
//! `‖Y − Xβ‖²_n + 2λ‖β‖₁` up to a constant when `Σ = XᵀX/n` and `c = XᵀY/n`.
//! The gradient `c − Σβ` is maintained incrementally.

use crate::error::{Error, Result};
use crate::linalg::{soft_threshold, Matrix, Vector};

/// Lasso problem expressed through second moments only.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    gram: Matrix,
    xty: Vector,
    yy: f64,
}

impl QuadraticProblem {
    /// `gram = XᵀX/n`, `xty = XᵀY/n`, `yy = ‖Y‖²_n`.
    pub fn new(gram: Matrix, xty: Vector, yy: f64) -> Result<Self> {
        if !gram.is_square() || gram.nrows() != xty.len() {
            return Err(Error::dim("Gram matrix and cross-product vector disagree"));
        }
        Ok(Self { gram, xty, yy })
    }

    pub fn dim(&self) -> usize {
        self.xty.len()
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn xty(&self) -> &Vector {
        &self.xty
    }

    pub fn yy(&self) -> f64 {
        self.yy
    }

    /// `c − Σβ`.
    pub fn gradient(&self, beta: &Vector) -> Vector {
        &self.xty - &self.gram * beta
    }

    /// `‖Y − Xβ‖²_n` given the matching gradient `c − Σβ`.
    pub(crate) fn rss_from_gradient(&self, beta: &Vector, grad: &Vector) -> f64 {
        (self.yy - beta.dot(&self.xty) - beta.dot(grad)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CdSettings {
    /// Largest coordinate move allowed in the final sweep.
    pub change_tol: f64,
    /// KKT violation required on exit.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for CdSettings {
    fn default() -> Self {
        Self {
            change_tol: 1e-10,
            kkt_tol: 1e-8,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CdOutcome {
    pub beta: Vector,
    pub grad: Vector,
    pub sweeps: usize,
}

/// Sup-norm KKT violation given the gradient `c − Σβ` and penalty level.
pub(crate) fn kkt_from_gradient(beta: &Vector, grad: &Vector, penalty: f64) -> f64 {
    beta.iter()
        .zip(grad.iter())
        .map(|(&b, &g)| {
            if b != 0.0 {
                (g - penalty * b.signum()).abs()
            } else {
                (g.abs() - penalty).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn half_objective(problem: &QuadraticProblem, beta: &Vector, grad: &Vector, penalty: f64) -> f64 {
    // ½βᵀΣβ − βᵀc = −½βᵀ(c + g) with g = c − Σβ
    -0.5 * (beta.dot(problem.xty()) + beta.dot(grad))
        + penalty * beta.iter().map(|b| b.abs()).sum::<f64>()
}

pub(crate) fn coordinate_descent(
    problem: &QuadraticProblem,
    penalty: f64,
    warm: Option<Vector>,
    settings: &CdSettings,
) -> Result<CdOutcome> {
    let p = problem.dim();
    let gram = problem.gram();
    let mut beta = match warm {
        Some(b) if b.len() == p => b,
        Some(_) => return Err(Error::dim("warm start has the wrong length")),
        None => Vector::zeros(p),
    };
    let mut grad = problem.gradient(&beta);
    let mut previous = half_objective(problem, &beta, &grad, penalty);

    for sweep in 1..=settings.max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..p {
            let sjj = gram[(j, j)];
            let old = beta[j];
            let new = if sjj > 0.0 {
                soft_threshold(grad[j] + sjj * old, penalty) / sjj
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                grad.axpy(-delta, &gram.column(j), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }

        let current = half_objective(problem, &beta, &grad, penalty);
        debug_assert!(
            current <= previous + 1e-10 * (1.0 + previous.abs()),
            "coordinate descent objective increased: {previous} -> {current}"
        );
        previous = current;

        if max_change < settings.change_tol {
            grad = problem.gradient(&beta);
            let kkt = kkt_from_gradient(&beta, &grad, penalty);
            if kkt < settings.kkt_tol {
                return Ok(CdOutcome { beta, grad, sweeps: sweep });
            }
        }
    }

    Err(Error::Convergence {
        iterations: settings.max_sweeps,
        violation: kkt_from_gradient(&beta, &problem.gradient(&beta), penalty),
        last_iterate: beta.as_slice().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_problem_is_soft_thresholding() {
        let problem = QuadraticProblem::new(Matrix::identity(3, 3), Vector::from_vec(vec![2.0, -0.3, 1.0]), 5.0).unwrap();
        let out = coordinate_descent(&problem, 0.5, None, &CdSettings::default()).unwrap();
        assert_eq!(out.beta.as_slice(), &[1.5, 0.0, 0.5]);
        assert!(kkt_from_gradient(&out.beta, &out.grad, 0.5) < 1e-14);
    }

    #[test]
    fn zero_column_is_left_at_zero() {
        let mut g = Matrix::identity(2, 2);
        g[(1, 1)] = 0.0;
        let problem = QuadraticProblem::new(g, Vector::from_vec(vec![1.0, 0.0]), 1.0).unwrap();
        let out = coordinate_descent(&problem, 0.25, None, &CdSettings::default()).unwrap();
        assert_eq!(out.beta.as_slice(), &[0.75, 0.0]);
    }

    #[test]
    fn reports_non_convergence_with_last_iterate() {
        let g = Matrix::from_row_slice(2, 2, &[1.0, 0.999, 0.999, 1.0]);
        let problem = QuadraticProblem::new(g, Vector::from_vec(vec![1.0, -1.0]), 2.0).unwrap();
        let settings = CdSettings { max_sweeps: 2, ..CdSettings::default() };
        match coordinate_descent(&problem, 1e-6, None, &settings) {
            Err(Error::Convergence { iterations, last_iterate, violation }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last_iterate.len(), 2);
                assert!(violation > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }
}
