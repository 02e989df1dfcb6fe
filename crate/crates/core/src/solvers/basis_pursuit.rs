//! Minimum-ℓ1 solution of an underdetermined linear system.
//!
//! `min ‖β‖₁ s.t. Xβ = f` is written as the linear program
//! `min 1ᵀ(u + v) s.t. [X, −X](u; v) = f, u, v ≥ 0` and solved with a dense
//! two-phase tableau simplex under Bland's rule, which cannot cycle.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-9;

/// Vertex solution of the basis-pursuit program.
#[derive(Debug, Clone)]
pub struct BasisPursuit {
    pub beta: Vector,
    pub l1_norm: f64,
    /// Set when some nonbasic column has zero reduced cost, so other
    /// minimizers may exist.
    pub non_unique: bool,
}

struct Tableau {
    /// Rows `0..m` are constraints, row `m` holds reduced costs; the last
    /// column is the right-hand side (negated objective in row `m`).
    t: Matrix,
    basis: Vec<usize>,
    m: usize,
    /// Columns allowed to enter the basis.
    eligible: usize,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.t.ncols() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.t[(row, col)];
        let mut r = self.t.row(row).clone_owned();
        r /= piv;
        self.t.set_row(row, &r);
        for i in 0..=self.m {
            if i != row {
                let f = self.t[(i, col)];
                if f != 0.0 {
                    for j in 0..self.t.ncols() {
                        self.t[(i, j)] -= f * r[j];
                    }
                    self.t[(i, col)] = 0.0;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Runs Bland's rule to optimality on the current cost row.
    fn optimize(&mut self) {
        let rhs = self.rhs_col();
        loop {
            let entering = (0..self.eligible).find(|&j| self.t[(self.m, j)] < -COST_TOL);
            let Some(col) = entering else { return };
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..self.m {
                let a = self.t[(i, col)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(i, rhs)] / a;
                    let better = match best {
                        None => true,
                        Some((r, _, b)) => ratio < r - 1e-14 || (ratio <= r + 1e-14 && self.basis[i] < b),
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            // The objective is bounded below by zero, so a ratio always exists.
            let Some((_, row, _)) = best else { return };
            self.pivot(row, col);
        }
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let ncols = self.t.ncols();
        for j in 0..ncols {
            self.t[(self.m, j)] = if j < cost.len() { cost[j] } else { 0.0 };
        }
        for i in 0..self.m {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..ncols {
                    self.t[(self.m, j)] -= cb * self.t[(i, j)];
                }
            }
        }
    }
}

/// `argmin{‖β‖₁ : Xβ = f}`.
pub fn basis_pursuit(x: &Matrix, f: &Vector) -> Result<BasisPursuit> {
    let (m, p) = x.shape();
    if f.len() != m {
        return Err(Error::dim(format!("X has {m} rows but f has length {}", f.len())));
    }
    if x.iter().chain(f.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("basis pursuit input"));
    }
    let nv = 2 * p;
    let mut t = Matrix::zeros(m + 1, nv + m + 1);
    for i in 0..m {
        let s = if f[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..p {
            t[(i, j)] = s * x[(i, j)];
            t[(i, p + j)] = -s * x[(i, j)];
        }
        t[(i, nv + i)] = 1.0;
        t[(i, nv + m)] = s * f[i];
    }
    let mut tab = Tableau { t, basis: (nv..nv + m).collect(), m, eligible: nv };

    let mut phase1 = vec![0.0; nv + m];
    phase1[nv..].iter_mut().for_each(|c| *c = 1.0);
    tab.set_costs(&phase1);
    tab.optimize();
    let infeasibility = -tab.t[(m, nv + m)];
    let scale = 1.0 + f.amax();
    if infeasibility > 1e-9 * scale {
        return Err(Error::Infeasible(infeasibility));
    }
    for i in 0..m {
        if tab.basis[i] >= nv {
            if let Some(j) = (0..nv).find(|&j| tab.t[(i, j)].abs() > 1e-9) {
                tab.pivot(i, j);
            }
        }
    }

    let mut phase2 = vec![1.0; nv];
    phase2.extend(std::iter::repeat_n(0.0, m));
    tab.set_costs(&phase2);
    tab.optimize();

    let mut uv = vec![0.0; nv];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < nv {
            uv[b] = tab.t[(i, nv + m)];
        }
    }
    let beta = Vector::from_fn(p, |j, _| uv[j] - uv[p + j]);
    let non_unique = (0..nv).any(|j| !tab.basis.contains(&j) && tab.t[(m, j)].abs() <= COST_TOL);
    let l1_norm = beta.iter().map(|b| b.abs()).sum();
    Ok(BasisPursuit { beta, l1_norm, non_unique })
}
