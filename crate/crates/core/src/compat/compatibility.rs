//! Compatibility constant `φ̂²(L, S)`.
//!
//! Writing `w = β_S − β_{S^c}`, the constant is `|S| min wᵀΣ̂w` over
//! `‖w_S‖₁ = 1, ‖w_{S^c}‖₁ ≤ L`. On a fixed sign orthant of `w_S` the equality
//! constraint becomes a simplex, so each orthant is a convex quadratic program.
//! Orthants `s` and `−s` give the same value, so only patterns with a positive
//! first sign are solved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{GramMatrix, IndexSet, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompatMethod {
    SignEnumeration,
    RandomRestart,
}

#[derive(Debug, Clone, Copy)]
pub struct CompatSettings {
    /// Iterations per accelerated projected-gradient round.
    pub max_iter: usize,
    /// Momentum restarts per orthant.
    pub rounds: usize,
    /// Target for `|S|` times the Frank-Wolfe gap of each orthant.
    pub tol: f64,
    /// Largest `|S|` solved by full orthant enumeration.
    pub enumeration_cap: usize,
    /// Orthants sampled when `|S|` exceeds the cap.
    pub random_orthants: usize,
    pub seed: u64,
    /// Stop as soon as the objective drops to this level. The result is then
    /// a feasible upper bound only and is never certified.
    pub target: Option<f64>,
}

impl Default for CompatSettings {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            rounds: 5,
            tol: 1e-8,
            enumeration_cap: 12,
            random_orthants: 256,
            seed: 0,
            target: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompatibilityResult {
    /// Best objective found; an upper bound on `φ̂²(L, S)`.
    pub value: f64,
    /// Minimizer in `β` coordinates: `β_S = w_S`, `β_{S^c} = −w_{S^c}`.
    pub minimizer: Vec<f64>,
    pub l: f64,
    pub s: IndexSet,
    pub method: CompatMethod,
    pub certified: bool,
    /// `value − max_orthant_gap` is a lower bound on `φ̂²(L, S)`.
    pub max_orthant_gap: f64,
}

impl CompatibilityResult {
    /// Certified lower bound on the constant.
    pub fn lower_bound(&self) -> f64 {
        (self.value - self.max_orthant_gap).max(0.0)
    }
}

/// Euclidean projection onto `{u ≥ 0, Σu = r}`.
pub fn project_simplex(v: &mut [f64], r: f64) {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - r) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Euclidean projection onto `{‖y‖₁ ≤ r}`.
pub fn project_l1_ball(v: &mut [f64], r: f64) {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= r {
        return;
    }
    let mut mag: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    project_simplex(&mut mag, r);
    for (x, m) in v.iter_mut().zip(mag) {
        *x = x.signum() * m;
    }
}

/// Convex piece of the compatibility problem on one sign orthant.
struct Orthant<'a> {
    sigma: &'a Matrix,
    s_idx: &'a [usize],
    c_idx: &'a [usize],
    signs: &'a [f64],
    /// Radius of the `ℓ1` ball on `S^c`.
    radius: f64,
}

struct OrthantSolution {
    w: Vector,
    value: f64,
    gap: f64,
}

impl Orthant<'_> {
    fn project(&self, w: &mut Vector) {
        let mut u: Vec<f64> = self.s_idx.iter().zip(self.signs).map(|(&j, &s)| s * w[j]).collect();
        project_simplex(&mut u, 1.0);
        for ((&j, &s), x) in self.s_idx.iter().zip(self.signs).zip(u) {
            w[j] = s * x;
        }
        if !self.c_idx.is_empty() {
            let mut y: Vec<f64> = self.c_idx.iter().map(|&j| w[j]).collect();
            project_l1_ball(&mut y, self.radius);
            for (&j, x) in self.c_idx.iter().zip(y) {
                w[j] = x;
            }
        }
    }

    /// Frank-Wolfe gap `∇ᵀw − min_{y∈C} ∇ᵀy` with `∇ = 2Σw`.
    fn gap(&self, w: &Vector, sw: &Vector) -> f64 {
        let g = sw * 2.0;
        let inner = g.dot(w);
        let best_s = self
            .s_idx
            .iter()
            .zip(self.signs)
            .map(|(&j, &s)| s * g[j])
            .fold(f64::INFINITY, f64::min);
        let best_c = self.c_idx.iter().map(|&j| g[j].abs()).fold(0.0, f64::max);
        (inner - best_s + self.radius * best_c).max(0.0)
    }

    fn start(&self, p: usize) -> Vector {
        let mut w = Vector::zeros(p);
        let k = self.s_idx.len() as f64;
        for (&j, &s) in self.s_idx.iter().zip(self.signs) {
            w[j] = s / k;
        }
        w
    }

    /// Accelerated projected gradient with function-value restarts.
    fn solve(&self, lipschitz: f64, settings: &CompatSettings, scale: f64) -> OrthantSolution {
        let p = self.sigma.nrows();
        let mut w = self.start(p);
        let mut sw = self.sigma * &w;
        let mut value = w.dot(&sw);
        let mut gap = self.gap(&w, &sw);
        if lipschitz <= 0.0 {
            return OrthantSolution { w, value, gap };
        }
        let step = 1.0 / lipschitz;

        'rounds: for _ in 0..settings.rounds {
            let mut y = w.clone();
            let mut sy = sw.clone();
            let mut theta = 1.0f64;
            for k in 0..settings.max_iter {
                if scale * gap <= settings.tol || settings.target.is_some_and(|t| scale * value <= t) {
                    break 'rounds;
                }
                let mut next = &y - &sy * (2.0 * step);
                self.project(&mut next);
                let s_next = self.sigma * &next;
                let v_next = next.dot(&s_next);
                if v_next > value {
                    // Momentum overshoot: restart from the current iterate.
                    y.copy_from(&w);
                    sy.copy_from(&sw);
                    theta = 1.0;
                    continue;
                }
                let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
                let m = (theta - 1.0) / theta_next;
                y = &next * (1.0 + m) - &w * m;
                sy = &s_next * (1.0 + m) - &sw * m;
                theta = theta_next;
                w = next;
                sw = s_next;
                value = v_next;
                if k % 8 == 7 {
                    gap = self.gap(&w, &sw);
                }
            }
            gap = self.gap(&w, &sw);
        }
        gap = self.gap(&w, &sw);
        if scale * gap > settings.tol {
            if let Some(pw) = self.polish(&w) {
                let psw = self.sigma * &pw;
                let (pv, pg) = (pw.dot(&psw), self.gap(&pw, &psw));
                if pg < gap && pv <= value + 1e-12 * value.abs() {
                    return OrthantSolution { w: pw, value: pv, gap: pg };
                }
            }
        }
        OrthantSolution { w, value, gap }
    }

    /// Exact minimizer on the face of `w`: the support and signs of `w` are
    /// frozen, and the ball constraint is kept as an equality when it is
    /// tight. `None` when that point leaves the orthant or the system is
    /// singular.
    fn polish(&self, w: &Vector) -> Option<Vector> {
        const ZERO: f64 = 1e-9;
        let a_s: Vec<(usize, f64)> =
            self.s_idx.iter().zip(self.signs).filter(|(&j, &s)| s * w[j] > ZERO).map(|(&j, &s)| (j, s)).collect();
        let a_c: Vec<(usize, f64)> = self.c_idx.iter().filter(|&&j| w[j].abs() > ZERO).map(|&j| (j, w[j].signum())).collect();
        let ball: f64 = self.c_idx.iter().map(|&j| w[j].abs()).sum();
        let tight = !a_c.is_empty() && self.radius - ball <= ZERO * self.radius.max(1.0);
        let vars: Vec<(usize, f64)> = a_s.iter().chain(&a_c).copied().collect();
        let m = vars.len();
        let rows = 1 + tight as usize;
        let mut kkt = Matrix::zeros(m + rows, m + rows);
        let mut rhs = Vector::zeros(m + rows);
        for (a, &(j, _)) in vars.iter().enumerate() {
            for (b, &(k, _)) in vars.iter().enumerate() {
                kkt[(a, b)] = 2.0 * self.sigma[(j, k)];
            }
        }
        for (a, &(_, sgn)) in vars.iter().enumerate() {
            let row = if a < a_s.len() { m } else if tight { m + 1 } else { continue };
            kkt[(row, a)] = sgn;
            kkt[(a, row)] = sgn;
        }
        rhs[m] = 1.0;
        if tight {
            rhs[m + 1] = self.radius;
        }
        let sol = kkt.lu().solve(&rhs)?;
        let mut out = Vector::zeros(w.len());
        for (a, &(j, sgn)) in vars.iter().enumerate() {
            if sgn * sol[a] < 0.0 {
                return None;
            }
            out[j] = sol[a];
        }
        let off: f64 = a_c.iter().map(|&(j, _)| out[j].abs()).sum();
        (off <= self.radius * (1.0 + 1e-12)).then_some(out)
    }
}

fn signs_from_mask(mask: u64, k: usize) -> Vec<f64> {
    (0..k).map(|i| if i == 0 || mask >> (i - 1) & 1 == 0 { 1.0 } else { -1.0 }).collect()
}

/// Compatibility constant of `Σ̂` for cone constant `L` and index set `S`.
pub fn compatibility_constant(
    gram: &GramMatrix,
    l: f64,
    s: &IndexSet,
    settings: &CompatSettings,
) -> Result<CompatibilityResult> {
    if s.p() != gram.dim() {
        return Err(Error::dim("index set and Gram matrix disagree on p"));
    }
    if s.is_empty() {
        return Err(Error::domain("compatibility constant needs a nonempty S"));
    }
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::domain(format!("L must be positive and finite, got {l}")));
    }
    let sigma = gram.as_matrix();
    let k = s.len();
    let scale = k as f64;
    let lipschitz = 2.0 * gram.max_eigenvalue().max(0.0);
    let s_idx: Vec<usize> = s.iter().collect();
    let c_idx: Vec<usize> = s.complement().iter().collect();

    let (patterns, method): (Vec<Vec<f64>>, CompatMethod) = if k <= settings.enumeration_cap {
        let count = 1u64 << (k - 1);
        ((0..count).map(|m| signs_from_mask(m, k)).collect(), CompatMethod::SignEnumeration)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let mut pats: Vec<Vec<f64>> = Vec::with_capacity(settings.random_orthants + 1);
        pats.push(vec![1.0; k]);
        while pats.len() < settings.random_orthants.max(1) {
            let mut sgn: Vec<f64> = (0..k).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            sgn[0] = 1.0;
            pats.push(sgn);
        }
        (pats, CompatMethod::RandomRestart)
    };

    let mut best: Option<OrthantSolution> = None;
    let mut max_gap = 0.0f64;
    let mut complete = true;
    for signs in &patterns {
        if settings.target.is_some_and(|t| best.as_ref().is_some_and(|b| scale * b.value <= t)) {
            complete = false;
            break;
        }
        let orth = Orthant { sigma, s_idx: &s_idx, c_idx: &c_idx, signs, radius: l };
        let sol = orth.solve(lipschitz, settings, scale);
        max_gap = max_gap.max(scale * sol.gap);
        if best.as_ref().is_none_or(|b| sol.value < b.value) {
            best = Some(sol);
        }
    }
    let best = best.expect("at least one orthant");
    let mut minimizer = best.w.as_slice().to_vec();
    for &j in &c_idx {
        minimizer[j] = -minimizer[j];
    }
    let reached_target = settings.target.is_some_and(|t| scale * best.value <= t);
    let certified = method == CompatMethod::SignEnumeration && complete && !reached_target && max_gap <= settings.tol;
    Ok(CompatibilityResult {
        value: (scale * best.value).max(0.0),
        minimizer,
        l,
        s: s.clone(),
        method,
        certified,
        max_orthant_gap: max_gap,
    })
}

/// `|S|·‖Xβ_S − Xβ_{S^c}‖²_n` evaluated through `Σ̂`.
pub fn compatibility_objective(gram: &GramMatrix, s: &IndexSet, beta: &[f64]) -> f64 {
    let w = Vector::from_iterator(
        beta.len(),
        beta.iter().enumerate().map(|(j, &b)| if s.contains(j) { b } else { -b }),
    );
    s.len() as f64 * gram.quadratic_form(&w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn gram2(rho: f64) -> GramMatrix {
        GramMatrix::from_matrix(Matrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap()
    }

    fn random_gram(p: usize, n: usize, seed: u64) -> GramMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        crate::linalg::gram(&x).unwrap()
    }

    /// Dense grid over `‖w_S‖₁ = 1` and the `L`-ball for a 2×2 problem with `S = {0}`.
    fn grid_oracle_p2(g: &GramMatrix, l: f64) -> f64 {
        let m = g.as_matrix();
        (0..=200_000)
            .map(|k| -l + 2.0 * l * k as f64 / 200_000.0)
            .map(|b| m[(0, 0)] - 2.0 * m[(0, 1)] * b + m[(1, 1)] * b * b)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn projections() {
        let mut v = [0.5, 0.2, -0.3];
        project_simplex(&mut v, 1.0);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(v.iter().all(|&x| x >= 0.0));
        let mut b = [3.0, -1.0, 0.0];
        project_l1_ball(&mut b, 2.0);
        assert_eq!(b, [2.0, 0.0, 0.0]);
        let mut inside = [0.1, -0.2];
        project_l1_ball(&mut inside, 1.0);
        assert_eq!(inside, [0.1, -0.2]);
    }

    #[test]
    fn identity_gives_one() {
        let g = GramMatrix::from_matrix(Matrix::identity(5, 5)).unwrap();
        for s in [vec![0], vec![1, 3], vec![0, 2, 4]] {
            for l in [0.5, 1.0, 3.0] {
                let r = compatibility_constant(&g, l, &IndexSet::new(s.clone(), 5).unwrap(), &Default::default())
                    .unwrap();
                assert!((r.value - 1.0).abs() < 1e-6, "{s:?} {l} {}", r.value);
                assert!(r.certified);
            }
        }
    }

    #[test]
    fn two_by_two_cases() {
        let s = IndexSet::new([0], 2).unwrap();
        let r = compatibility_constant(&gram2(0.5), 2.0, &s, &Default::default()).unwrap();
        assert!((r.value - 0.75).abs() < 1e-6);
        assert!((grid_oracle_p2(&gram2(0.5), 2.0) - 0.75).abs() < 1e-6);
        let r = compatibility_constant(&gram2(0.9), 0.5, &s, &Default::default()).unwrap();
        assert!((r.value - 0.35).abs() < 1e-6);
        assert!((grid_oracle_p2(&gram2(0.9), 0.5) - 0.35).abs() < 1e-6);
        assert!(r.certified);
        let b = &r.minimizer;
        assert!((b[0].abs() - 1.0).abs() < 1e-8);
        assert!(b[1].abs() <= 0.5 * (1.0 + 1e-8));
        assert!((compatibility_objective(&gram2(0.9), &s, b) - r.value).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_input() {
        let g = gram2(0.1);
        assert!(compatibility_constant(&g, 1.0, &IndexSet::empty(2), &Default::default()).is_err());
        assert!(compatibility_constant(&g, 0.0, &IndexSet::full(2), &Default::default()).is_err());
    }

    #[test]
    fn large_support_falls_back_to_random_orthants() {
        let g = random_gram(14, 40, 2);
        let s = IndexSet::new(0..13, 14).unwrap();
        let settings = CompatSettings { random_orthants: 16, ..Default::default() };
        let r = compatibility_constant(&g, 1.0, &s, &settings).unwrap();
        assert_eq!(r.method, CompatMethod::RandomRestart);
        assert!(!r.certified);
        assert!(r.value >= g.min_eigenvalue() - 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn invariants(seed in 0u64..500, p in 2usize..6, l in 0.2f64..4.0) {
            let g = random_gram(p, 3 * p, seed);
            let s = IndexSet::new(0..(1 + (seed as usize) % (p - 1)), p).unwrap();
            let r = compatibility_constant(&g, l, &s, &Default::default()).unwrap();
            prop_assert!(r.value >= g.min_eigenvalue() - 1e-8);
            let bs: f64 = s.iter().map(|j| r.minimizer[j].abs()).sum();
            let bc: f64 = s.complement().iter().map(|j| r.minimizer[j].abs()).sum();
            prop_assert!((bs - 1.0).abs() <= 1e-8);
            prop_assert!(bc <= l * (1.0 + 1e-8));
            let obj = compatibility_objective(&g, &s, &r.minimizer);
            prop_assert!((obj - r.value).abs() <= 1e-8 * r.value.max(1e-12) + 1e-14);
            let wider = compatibility_constant(&g, 2.0 * l, &s, &Default::default()).unwrap();
            prop_assert!(wider.value <= r.value + 1e-8);
        }
    }
}
