//! Brute-force reference computations that share no code path with the
//! solvers they check.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::Result;
use crate::linalg::{l1_norm, DesignData, IndexSet, Matrix, Vector};
use crate::solvers::solve_lasso_scaled;

#[derive(Debug, Clone)]
pub struct SigmaGridOracle {
    pub sigma: f64,
    pub beta: Vector,
    pub objective: f64,
    pub evaluations: usize,
}

/// Square-root Lasso through its scale: minimizes
/// `g(σ) = ‖Y − Xβ̂(σ)‖_n + λ‖β̂(σ)‖₁` with `β̂(σ)` the Lasso at penalty
/// `2λσ‖β‖₁`, first on `grid` equispaced points of `(0, ‖Y‖_n]` and then by
/// golden-section search on the bracketing cell.
pub fn sqrt_lasso_sigma_grid(data: &DesignData, lambda: f64, grid: usize) -> Result<SigmaGridOracle> {
    let n = data.n() as f64;
    let top = (data.y().norm_squared() / n).sqrt();
    let mut evaluations = 0;
    let mut eval = |sigma: f64| -> Result<(f64, Vector)> {
        evaluations += 1;
        let beta = solve_lasso_scaled(data, lambda, sigma)?.into_beta();
        let r = data.residual(&beta);
        Ok(((r.norm_squared() / n).sqrt() + lambda * l1_norm(beta.as_slice()), beta))
    };
    let step = top / grid as f64;
    let mut best = (f64::INFINITY, 0);
    for k in 1..=grid {
        let (g, _) = eval(step * k as f64)?;
        if g < best.0 {
            best = (g, k);
        }
    }
    let (mut lo, mut hi) = (step * (best.1 as f64 - 1.0).max(1e-3), step * (best.1 + 1) as f64);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut gc, mut gd) = (eval(c)?.0, eval(d)?.0);
    while hi - lo > 1e-11 * top {
        if gc <= gd {
            hi = d;
            d = c;
            gd = gc;
            c = hi - phi * (hi - lo);
            gc = eval(c)?.0;
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + phi * (hi - lo);
            gd = eval(d)?.0;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let (objective, beta) = eval(sigma)?;
    Ok(SigmaGridOracle { sigma, beta, objective, evaluations })
}

/// `|S|‖Xu‖²_n` for `u = β_S − β_{S^c}`.
fn compat_objective(x: &Matrix, k: f64, u: &Vector) -> f64 {
    k * (x * u).norm_squared() / x.nrows() as f64
}

/// Moves `u` back into `‖u_S‖₁ = 1`, `‖u_{S^c}‖₁ ≤ L`.
fn repair(u: &mut Vector, in_s: &[bool], l: f64) -> bool {
    let (mut a, mut b) = (0.0, 0.0);
    for (v, &s) in u.iter().zip(in_s) {
        if s {
            a += v.abs();
        } else {
            b += v.abs();
        }
    }
    if a == 0.0 {
        return false;
    }
    let shrink = if b > l { l / b } else { 1.0 };
    for (v, &s) in u.iter_mut().zip(in_s) {
        *v *= if s { 1.0 / a } else { shrink };
    }
    true
}

fn random_feasible<R: Rng + ?Sized>(p: usize, in_s: &[bool], l: f64, rng: &mut R) -> Vector {
    let outside = in_s.iter().filter(|&&s| !s).count();
    // Sparse directions off S, boundary radius a third of the time.
    let keep = if outside == 0 { 0.0 } else { rng.random_range(0..=outside) as f64 / outside as f64 };
    let radius = if rng.random::<f64>() < 1.0 / 3.0 { l } else { l * rng.random::<f64>() };
    let mut w: Vec<f64> = (0..p)
        .map(|j| {
            let e: f64 = Exp1.sample(rng);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            if in_s[j] || rng.random::<f64>() < keep {
                sign * e
            } else {
                0.0
            }
        })
        .collect();
    let off: f64 = w.iter().zip(in_s).filter(|(_, &s)| !s).map(|(v, _)| v.abs()).sum();
    for (v, &s) in w.iter_mut().zip(in_s) {
        if !s {
            *v *= if off > 0.0 { radius / off } else { 0.0 };
        }
    }
    let mut u = Vector::from_vec(w);
    repair(&mut u, in_s, l);
    u
}

/// Pattern search over single-coordinate and same-block pair moves.
fn polish(x: &Matrix, k: f64, in_s: &[bool], l: f64, mut u: Vector) -> (f64, Vector) {
    let p = u.len();
    let mut best = compat_objective(x, k, &u);
    let mut h = 0.1;
    let moves: Vec<(usize, Option<usize>)> = (0..p)
        .map(|a| (a, None))
        .chain((0..p).flat_map(|a| ((a + 1)..p).filter(move |&b| in_s[a] == in_s[b]).map(move |b| (a, Some(b)))))
        .collect();
    while h > 1e-12 {
        let mut improved = false;
        for &(a, b) in &moves {
            for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                if b.is_none() && sb < 0.0 {
                    continue;
                }
                let mut v = u.clone();
                v[a] += sa * h;
                if let Some(b) = b {
                    v[b] += sb * h;
                }
                if !repair(&mut v, in_s, l) {
                    continue;
                }
                let f = compat_objective(x, k, &v);
                if f < best {
                    best = f;
                    u = v;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (best, u)
}

/// Random-search estimate of `φ̂²(L, S)`: the best of `samples` feasible
/// draws, each of the ten best then polished by pattern search.
pub fn compat_random_search<R: Rng + ?Sized>(x: &Matrix, s: &IndexSet, l: f64, samples: usize, rng: &mut R) -> f64 {
    let p = x.ncols();
    let in_s: Vec<bool> = (0..p).map(|j| s.contains(j)).collect();
    let k = s.len() as f64;
    let mut pool: Vec<(f64, Vector)> = (0..samples)
        .map(|_| {
            let u = random_feasible(p, &in_s, l, rng);
            (compat_objective(x, k, &u), u)
        })
        .collect();
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));
    pool.truncate(10);
    pool.into_iter().map(|(_, u)| polish(x, k, &in_s, l, u).0).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaining::rep_rng;

    #[test]
    fn random_search_finds_analytic_constants() {
        let mut rng = rep_rng(3, 0);
        // Σ̂ = XᵀX/n with unit diagonal and off-diagonal ρ via a 2 × 2 root.
        for (rho, l, want) in [(0.5, 2.0, 0.75), (0.9, 0.5, 0.35)] {
            let c = nalgebra::Cholesky::new(Matrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap().l();
            let x = c.transpose() * 2f64.sqrt();
            let s = IndexSet::new([0], 2).unwrap();
            let v = compat_random_search(&x, &s, l, 20_000, &mut rng);
            assert!((v - want).abs() < 1e-8, "{v} vs {want}");
        }
        let x = Matrix::identity(4, 4) * 2.0;
        let v = compat_random_search(&x, &IndexSet::new([0, 1], 4).unwrap(), 1.0, 20_000, &mut rng);
        assert!((v - 1.0).abs() < 1e-8, "{v}");
    }
}
