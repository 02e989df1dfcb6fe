//! Covering-set chains over a finite metric space and the generic chaining
//! functionals evaluated on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Chain `𝒢₀ = {t₀} ⊂ … ⊂ 𝒢_S` over points `0..m` of a finite metric space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainTree {
    /// `levels[s]` lists the members of `𝒢_s` by point index.
    pub levels: Vec<Vec<usize>>,
    /// `parent[s][i]` is the point in `𝒢_{s−1}` nearest to `levels[s][i]`;
    /// `parent[0]` is empty.
    pub parent: Vec<Vec<usize>>,
    /// `paths[j][s] = w(j, s)` for `j ∈ 𝒢_S`, `s = 0..=S`.
    pub paths: Vec<Vec<usize>>,
    /// `distances[j][s−1] = d_j(s)`.
    pub distances: Vec<Vec<f64>>,
    /// `entropies[s−1] = H_s = log(2|𝒢_s|)`.
    pub entropies: Vec<f64>,
    /// `R_n = max_t d(t, t₀)`.
    pub radius: f64,
    /// `R_n(S) = max_j Σ_s d_j(s)`.
    pub radius_chain: f64,
    pub n: usize,
    pub t0: usize,
}

/// Pairwise `‖t − t̃‖_n` for the columns of `points` (each of length `n`).
pub fn distance_matrix_n(points: &Matrix) -> Matrix {
    let m = points.ncols();
    let n = points.nrows() as f64;
    let mut d = Matrix::zeros(m, m);
    for a in 0..m {
        for b in (a + 1)..m {
            let v = ((points.column(a) - points.column(b)).norm_squared() / n).sqrt();
            d[(a, b)] = v;
            d[(b, a)] = v;
        }
    }
    d
}

fn check_metric(dist: &Matrix) -> Result<()> {
    if !dist.is_square() || dist.nrows() == 0 {
        return Err(Error::dim("distance matrix must be square and non-empty"));
    }
    let m = dist.nrows();
    for a in 0..m {
        if dist[(a, a)] != 0.0 {
            return Err(Error::domain("distance matrix must vanish on the diagonal"));
        }
        for b in 0..m {
            let v = dist[(a, b)];
            if !(v >= 0.0) || !v.is_finite() || v != dist[(b, a)] {
                return Err(Error::domain("distances must be finite, nonnegative and symmetric"));
            }
        }
    }
    Ok(())
}

fn nearest(dist: &Matrix, from: usize, candidates: &[usize]) -> usize {
    // Strict comparison over ascending indices breaks ties by lowest index.
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    let mut best = sorted[0];
    for &c in &sorted[1..] {
        if dist[(from, c)] < dist[(from, best)] {
            best = c;
        }
    }
    best
}

/// Builds nested covers by farthest-point insertion from `t₀`. Level `s < S`
/// is the shortest prefix of the insertion order with cover radius at most
/// `2^{−s}R_n`; level `S` is the whole point set.
pub fn build_covering_chain(dist: &Matrix, t0: usize, depth: usize, n: usize) -> Result<ChainTree> {
    check_metric(dist)?;
    let m = dist.nrows();
    if t0 >= m {
        return Err(Error::domain(format!("t₀ = {t0} is not one of the {m} points")));
    }
    if depth == 0 || n == 0 {
        return Err(Error::domain("S and n must be at least 1"));
    }
    let radius = (0..m).map(|t| dist[(t, t0)]).fold(0.0, f64::max);

    // Farthest-point order with the running cover radius after each insertion.
    let mut order = vec![t0];
    let mut inserted = vec![false; m];
    inserted[t0] = true;
    let mut gap: Vec<f64> = (0..m).map(|t| dist[(t, t0)]).collect();
    let mut cover_radius = vec![radius];
    while order.len() < m {
        // Strict comparison keeps the lowest index among equally far points.
        let mut next = None;
        let mut far = -1.0;
        for t in (0..m).filter(|&t| !inserted[t]) {
            if gap[t] > far {
                far = gap[t];
                next = Some(t);
            }
        }
        let Some(next) = next else { break };
        order.push(next);
        inserted[next] = true;
        for t in 0..m {
            gap[t] = gap[t].min(dist[(t, next)]);
        }
        cover_radius.push(gap.iter().copied().fold(0.0, f64::max));
    }

    let mut levels = vec![vec![t0]];
    for s in 1..depth {
        let target = radius * 0.5f64.powi(s as i32);
        let k = cover_radius.iter().position(|&r| r <= target).unwrap_or(m - 1) + 1;
        levels.push(order[..k].to_vec());
    }
    levels.push((0..m).collect());

    let mut parent = vec![Vec::new()];
    for s in 1..=depth {
        parent.push(levels[s].iter().map(|&t| nearest(dist, t, &levels[s - 1])).collect());
    }

    let finest = &levels[depth];
    let mut paths = Vec::with_capacity(finest.len());
    let mut distances = Vec::with_capacity(finest.len());
    for &j in finest {
        let mut path = vec![0usize; depth + 1];
        path[depth] = j;
        for s in (1..=depth).rev() {
            let i = levels[s].iter().position(|&t| t == path[s]).expect("path stays inside its level");
            path[s - 1] = parent[s][i];
        }
        distances.push((1..=depth).map(|s| dist[(path[s], path[s - 1])]).collect::<Vec<f64>>());
        paths.push(path);
    }
    let entropies = (1..=depth).map(|s| (2.0 * levels[s].len() as f64).ln()).collect();
    let radius_chain = distances.iter().map(|d: &Vec<f64>| d.iter().sum::<f64>()).fold(0.0, f64::max);
    Ok(ChainTree { levels, parent, paths, distances, entropies, radius, radius_chain, n, t0 })
}

impl ChainTree {
    pub fn depth(&self) -> usize {
        self.entropies.len()
    }

    /// Whether `𝒢_S` is the whole point set.
    pub fn finest_is_full(&self, m: usize) -> bool {
        self.levels.last().is_some_and(|l| l.len() == m)
    }

    fn chain_sum(&self, weight: impl Fn(usize, f64) -> f64) -> f64 {
        let n = self.n as f64;
        self.distances
            .iter()
            .map(|d| d.iter().enumerate().map(|(i, &dj)| dj * (weight(i + 1, self.entropies[i]) / n).sqrt()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest cover radius of level `s` over the `m` points.
    pub fn cover_radius(&self, dist: &Matrix, s: usize) -> f64 {
        (0..dist.nrows())
            .map(|t| self.levels[s].iter().map(|&g| dist[(t, g)]).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    }
}

/// `γ_n(S) = max_j Σ_s d_j(s)√(2(H_s + s log 2)/n)`.
pub fn gamma_n(tree: &ChainTree) -> f64 {
    tree.chain_sum(|s, h| 2.0 * (h + s as f64 * std::f64::consts::LN_2))
}

/// `γ_n(a, S) = max_j Σ_s d_j(s)√((2H_s + 2(1+s)(1+a))/n)`.
pub fn gamma_n_deviation(tree: &ChainTree, a: f64) -> Result<f64> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("a must be nonnegative, got {a}")));
    }
    Ok(tree.chain_sum(|s, h| 2.0 * h + 2.0 * (1.0 + s as f64) * (1.0 + a)))
}

/// Both sides of `γ_n(a, S) ≤ γ_n(0, S) + R_n(S)√(2a/n)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RemarkCheck {
    pub a: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn deviation_remark(tree: &ChainTree, a: f64) -> Result<RemarkCheck> {
    let lhs = gamma_n_deviation(tree, a)?;
    let rhs = gamma_n_deviation(tree, 0.0)? + tree.radius_chain * (2.0 * a / tree.n as f64).sqrt();
    Ok(RemarkCheck { a, lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-12) })
}

/// `γ_n(S) + √(2R_n(S)²/n)`; requires `𝒢_S` to be the whole point set so the
/// residual term `E‖δ̄_n(·, S)‖_∞` vanishes.
pub fn expectation_bound(tree: &ChainTree, m: usize) -> Result<f64> {
    if !tree.finest_is_full(m) {
        return Err(Error::Inapplicable("finest level is not the whole point set; supply a bound on the residual term".into()));
    }
    Ok(expectation_bound_with_residual(tree, 0.0))
}

/// `γ_n(S) + √(2R_n(S)²/n) + δ` for a caller-supplied bound `δ` on
/// `E‖δ̄_n(·, S)‖_∞`.
pub fn expectation_bound_with_residual(tree: &ChainTree, residual: f64) -> f64 {
    gamma_n(tree) + (2.0 * tree.radius_chain.powi(2) / tree.n as f64).sqrt() + residual
}

/// Points drawn uniformly from the Euclidean unit ball of `ℝⁿ`, as columns.
pub fn unit_ball_points<R: rand::Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Matrix {
    use rand_distr::{Distribution, StandardNormal};
    let mut pts = Matrix::zeros(n, m);
    for k in 0..m {
        let g = Vector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let u: f64 = rng.random();
        let r = u.powf(1.0 / n as f64);
        pts.set_column(k, &(g.normalize() * r));
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(m: usize) -> Matrix {
        Matrix::from_fn(m, m, |a, b| (a as f64 - b as f64).abs())
    }

    #[test]
    fn singleton_tree_is_trivial() {
        let t = build_covering_chain(&Matrix::zeros(1, 1), 0, 3, 10).unwrap();
        assert!(t.levels.iter().all(|l| l == &vec![0]));
        assert!(t.distances.iter().flatten().all(|&d| d == 0.0));
        assert_eq!(gamma_n(&t), 0.0);
        assert_eq!(expectation_bound(&t, 1).unwrap(), 0.0);
    }

    #[test]
    fn two_point_tree_arithmetic() {
        let t = build_covering_chain(&line(2), 0, 1, 1).unwrap();
        assert_eq!(t.levels[1].len(), 2);
        assert_eq!(t.distances[t.levels[1].iter().position(|&x| x == 1).unwrap()], vec![1.0]);
        assert!((t.entropies[0] - 4f64.ln()).abs() < 1e-15);
        // √(2 log 8), √(2 log 4 + 8) and √(2 log 8) + √2.
        assert!((gamma_n(&t) - 2.039_334).abs() < 1e-6);
        let g = gamma_n_deviation(&t, 1.0).unwrap();
        assert!((g - 3.282_162).abs() < 1e-6, "{g}");
        assert!((expectation_bound(&t, 2).unwrap() - 3.453_548).abs() < 1e-6);
    }

    #[test]
    fn covers_hold_on_a_line() {
        let d = line(16);
        let t = build_covering_chain(&d, 0, 4, 1).unwrap();
        for s in 0..=4 {
            assert!(t.cover_radius(&d, s) <= t.radius * 0.5f64.powi(s as i32) + 1e-12);
        }
        for s in 1..=4 {
            for (i, &p) in t.parent[s].iter().enumerate() {
                let member = t.levels[s][i];
                let best = t.levels[s - 1].iter().map(|&g| d[(member, g)]).fold(f64::INFINITY, f64::min);
                assert_eq!(d[(member, p)], best);
            }
        }
        for (path, dist) in t.paths.iter().zip(&t.distances) {
            assert_eq!(path[0], 0);
            for s in 1..=4 {
                assert!((dist[s - 1] - d[(path[s], path[s - 1])]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gamma_scales_with_root_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = unit_ball_points(20, 12, &mut rng);
        let d = distance_matrix_n(&pts);
        let t1 = build_covering_chain(&d, 0, 3, 50).unwrap();
        let t2 = build_covering_chain(&d, 0, 3, 100).unwrap();
        assert!((gamma_n(&t1) / gamma_n(&t2) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn deviation_functional_is_monotone_and_continuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = distance_matrix_n(&unit_ball_points(10, 20, &mut rng));
        let t = build_covering_chain(&d, 3, 4, 10).unwrap();
        let mut last = gamma_n_deviation(&t, 0.0).unwrap();
        assert!((gamma_n_deviation(&t, 1e-12).unwrap() - last).abs() < 1e-9);
        for a in [0.5, 1.0, 2.0, 4.0] {
            let v = gamma_n_deviation(&t, a).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(gamma_n_deviation(&t, -1.0).is_err());
    }

    #[test]
    fn remark_can_fail_for_large_deviations() {
        // Each level contributes √(2H + 2(1+s)(1+a)); the remark's slope √(2a)
        // misses the factor √(1+s), so a single deep level breaks it.
        let t = build_covering_chain(&line(2), 0, 1, 1).unwrap();
        assert!(deviation_remark(&t, 1.0).unwrap().holds);
        assert!(!deviation_remark(&t, 100.0).unwrap().holds);
    }

    #[test]
    fn rejects_bad_metrics() {
        let mut d = line(3);
        d[(0, 1)] = 5.0;
        assert!(build_covering_chain(&d, 0, 2, 1).is_err());
        assert!(build_covering_chain(&line(3), 3, 2, 1).is_err());
        assert!(build_covering_chain(&line(3), 0, 0, 1).is_err());
    }
}
