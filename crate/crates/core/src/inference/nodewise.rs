//! Square-root node-wise Lasso and the surrogate inverse it induces.
//!
//! Node `j` regresses `X_j` on `X_{−j}` with the square-root Lasso at level
//! `λ̲`. Writing `γ̂_j` for the coefficients, `τ̂_j² = ‖X_j − X_{−j}γ̂_j‖²_n`,
//! `τ̃_j² = τ̂_j² + λ̲τ̂_j‖γ̂_j‖₁` and `Ĉ_j` for the column with `1` at `j` and
//! `−γ̂_j` elsewhere, the surrogate inverse is `Θ̂_j = Ĉ_j/τ̃_j²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram, l1_norm, GramMatrix, Matrix, Vector};
use crate::solvers::{kkt_from_gradient, scale_fixed_point, CdSettings, QuadraticProblem, ScaleRule, SolverSettings, SIGMA_MIN};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodewiseInverse {
    pub theta: Matrix,
    pub c: Matrix,
    pub tau_hat_sq: Vec<f64>,
    pub tau_tilde_sq: Vec<f64>,
    pub lambda: f64,
    /// Sup-norm KKT violation of each node regression at its effective penalty.
    pub kkt: Vec<f64>,
}

/// Default node-wise level `√(log p / n)`.
pub fn default_nodewise_lambda(n: usize, p: usize) -> f64 {
    ((p as f64).ln() / n as f64).sqrt()
}

/// Inner solves run well below the invariant tolerances so that the
/// surrogate identities hold to `1e−8` after division by `τ̃_j²`.
fn node_settings() -> SolverSettings {
    SolverSettings {
        cd: CdSettings { change_tol: 1e-12, kkt_tol: 1e-11, ..CdSettings::default() },
        scale_tol: 1e-12,
        ..SolverSettings::default()
    }
}

struct Node {
    gamma: Vector,
    tau_hat_sq: f64,
    tau_tilde_sq: f64,
    kkt: f64,
}

fn others(p: usize, j: usize) -> Vec<usize> {
    (0..p).filter(|&k| k != j).collect()
}

fn solve_node(sigma: &Matrix, x: &Matrix, j: usize, lambda: f64) -> Result<Node> {
    let p = sigma.nrows();
    let idx = others(p, j);
    let k = idx.len();
    let sub = Matrix::from_fn(k, k, |a, b| sigma[(idx[a], idx[b])]);
    let cross = Vector::from_fn(k, |a, _| sigma[(idx[a], j)]);
    let degenerate = |s: f64| Error::DegenerateScale { sigma: s, node: Some(j) };

    let problem = QuadraticProblem::new(sub, cross, sigma[(j, j)])?;
    let (gamma, scale) = if k == 0 {
        (Vector::zeros(0), 0.0)
    } else if lambda == 0.0 {
        let chol = nalgebra::Cholesky::new(problem.gram().clone()).ok_or(Error::Singular(f64::INFINITY))?;
        (chol.solve(problem.xty()), 0.0)
    } else {
        let out = scale_fixed_point(&problem, lambda, ScaleRule::SquareRoot, &node_settings()).map_err(|e| match e {
            Error::DegenerateScale { sigma, .. } => degenerate(sigma),
            other => other,
        })?;
        (out.cd.beta, out.sigma)
    };

    let mut r = x.column(j).clone_owned();
    for (a, &m) in idx.iter().enumerate() {
        if gamma[a] != 0.0 {
            r.axpy(-gamma[a], &x.column(m), 1.0);
        }
    }
    let tau_hat_sq = r.norm_squared() / x.nrows() as f64;
    if tau_hat_sq.sqrt() < SIGMA_MIN {
        return Err(degenerate(tau_hat_sq.sqrt()));
    }
    // The penalty was applied at `scale`, the fixed point of `τ ↦ τ̂(τ)`.
    let tau_tilde_sq = tau_hat_sq + lambda * scale * l1_norm(gamma.as_slice());
    let kkt = kkt_from_gradient(&gamma, &problem.gradient(&gamma), lambda * scale);
    Ok(Node { gamma, tau_hat_sq, tau_tilde_sq, kkt })
}

/// Runs the `p` square-root node-wise regressions. `λ̲ = 0` gives the
/// unpenalized regressions and hence `Θ̂ = Σ̂⁻¹` when `p < n`.
pub fn nodewise_sqrt_lasso(x: &Matrix, lambda: f64) -> Result<NodewiseInverse> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!("λ̲ must be nonnegative and finite, got {lambda}")));
    }
    let g: GramMatrix = gram(x)?;
    let sigma = g.as_matrix();
    let p = sigma.nrows();
    let nodes: Vec<Node> = (0..p)
        .into_par_iter()
        .map(|j| solve_node(sigma, x, j, lambda))
        .collect::<Result<_>>()?;

    let mut c = Matrix::identity(p, p);
    let mut theta = Matrix::zeros(p, p);
    for (j, node) in nodes.iter().enumerate() {
        for (a, k) in others(p, j).into_iter().enumerate() {
            c[(k, j)] = -node.gamma[a];
        }
        theta.set_column(j, &(c.column(j) / node.tau_tilde_sq));
    }
    Ok(NodewiseInverse {
        theta,
        c,
        tau_hat_sq: nodes.iter().map(|n| n.tau_hat_sq).collect(),
        tau_tilde_sq: nodes.iter().map(|n| n.tau_tilde_sq).collect(),
        lambda,
        kkt: nodes.iter().map(|n| n.kkt).collect(),
    })
}

impl NodewiseInverse {
    pub fn p(&self) -> usize {
        self.theta.nrows()
    }

    pub fn tau_hat(&self, j: usize) -> f64 {
        self.tau_hat_sq[j].sqrt()
    }

    /// `‖τ̃⁻¹‖_∞ = max_j 1/τ̃_j`.
    pub fn max_inverse_tau_tilde(&self) -> f64 {
        self.tau_tilde_sq.iter().map(|t| 1.0 / t.sqrt()).fold(0.0, f64::max)
    }

    /// Largest violations of the surrogate-inverse and variance identities:
    /// `(diagonal, off-diagonal excess, variance)`.
    pub fn identity_defects(&self, sigma: &GramMatrix) -> (f64, f64, f64) {
        let s = sigma.as_matrix();
        let st = s * &self.theta;
        let mut diag = 0.0f64;
        let mut off = 0.0f64;
        let mut var = 0.0f64;
        for j in 0..self.p() {
            let cap = self.lambda * self.tau_hat(j) / self.tau_tilde_sq[j];
            diag = diag.max((st[(j, j)] - 1.0).abs());
            for k in (0..self.p()).filter(|&k| k != j) {
                off = off.max(st[(k, j)].abs() - cap);
            }
            let col = self.theta.column(j);
            let q = col.dot(&(s * col));
            var = var.max((q - self.tau_hat_sq[j] / self.tau_tilde_sq[j].powi(2)).abs());
        }
        (diag, off, var)
    }
}
