//! Hoeffding-type bounds, maxima of averages and generic chaining, each with a
//! Monte Carlo check driven by counter-based random streams.

mod tree;

pub use tree::{
    build_covering_chain, deviation_remark, distance_matrix_n, expectation_bound, expectation_bound_with_residual,
    gamma_n, gamma_n_deviation, unit_ball_points, ChainTree, RemarkCheck,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_n, Matrix, Vector};

/// Stream `rep` of the generator keyed by `seed`.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Allowed excess of an empirical frequency over its target `q`:
/// three binomial standard errors at `q`.
pub fn binomial_slack(q: f64, reps: usize) -> f64 {
    3.0 * (q * (1.0 - q) / reps as f64).sqrt()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HoeffdingTail {
    /// `‖c‖_n√(2a/n)`.
    pub threshold: f64,
    /// `e^{−a}`.
    pub prob_bound: f64,
}

/// `P(Σ X_i/n ≥ ‖c‖_n√(2a/n)) ≤ e^{−a}` for independent centred `|X_i| ≤ c_i`.
pub fn hoeffding_tail_bound(c: &[f64], a: f64) -> Result<HoeffdingTail> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("a must be positive, got {a}")));
    }
    if c.iter().any(|&ci| !(ci > 0.0) || !ci.is_finite()) {
        return Err(Error::domain("c must be positive entrywise"));
    }
    let n = c.len() as f64;
    Ok(HoeffdingTail { threshold: norm_n(c)? * (2.0 * a / n).sqrt(), prob_bound: (-a).exp() })
}

/// `√(2 log(2p)/n)`, bounding `E max_j |Σ_i X_i(j)/n|`.
pub fn max_averages_bound(n: usize, p: usize) -> Result<f64> {
    crate::compat::theoretical_lambda(n, p, 0.0)
}

/// `√(2(log(2p) + a)/n)`, exceeded with probability at most `e^{−a}`.
pub fn max_averages_tail(n: usize, p: usize, a: f64) -> Result<f64> {
    crate::compat::theoretical_lambda(n, p, a)
}

/// `log(½e^{−z} + ½e^{z}) − z²/2`, which is never positive.
pub fn cosh_log_gap(z: f64) -> f64 {
    // log cosh z = |z| + log(1 + e^{−2|z|}) − log 2
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2 - 0.5 * z * z
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exceedance {
    pub a: f64,
    pub threshold: f64,
    pub frequency: f64,
    pub target: f64,
    pub slack: f64,
    pub pass: bool,
}

impl Exceedance {
    fn new(a: f64, threshold: f64, hits: usize, reps: usize) -> Self {
        let target = (-a).exp();
        let frequency = if reps == 0 { 0.0 } else { hits as f64 / reps as f64 };
        let slack = if reps == 0 { 0.0 } else { binomial_slack(target, reps) };
        Self { a, threshold, frequency, target, slack, pass: frequency <= target + slack }
    }
}

fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn draws<T: Send>(reps: usize, seed: u64, f: impl Fn(&mut ChaCha8Rng) -> T + Sync) -> Vec<T> {
    (0..reps as u64).into_par_iter().map(|r| f(&mut rep_rng(seed, r))).collect()
}

/// Exceedance frequencies of `Σ c_iε_i/n` over the Hoeffding thresholds.
pub fn hoeffding_monte_carlo(c: &[f64], a_grid: &[f64], reps: usize, seed: u64) -> Result<Vec<Exceedance>> {
    let tails = a_grid.iter().map(|&a| hoeffding_tail_bound(c, a)).collect::<Result<Vec<_>>>()?;
    let n = c.len() as f64;
    let means = draws(reps, seed, |rng| c.iter().map(|ci| ci * rademacher(rng)).sum::<f64>() / n);
    Ok(a_grid
        .iter()
        .zip(&tails)
        .map(|(&a, t)| Exceedance::new(a, t.threshold, means.iter().filter(|&&m| m >= t.threshold).count(), reps))
        .collect())
}

/// Empirical `E exp(λεᵀc)` against `exp(nλ²‖c‖²_n/2)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MgfCheck {
    pub lambda: f64,
    pub empirical: f64,
    pub bound: f64,
    pub exact: f64,
}

pub fn rademacher_mgf_check(c: &[f64], lambda: f64, reps: usize, seed: u64) -> Result<MgfCheck> {
    let nc2: f64 = c.iter().map(|x| x * x).sum();
    let values = draws(reps, seed, |rng| (lambda * c.iter().map(|ci| ci * rademacher(rng)).sum::<f64>()).exp());
    let empirical = values.iter().sum::<f64>() / reps.max(1) as f64;
    let exact = c.iter().map(|ci| (lambda * ci).cosh()).product();
    Ok(MgfCheck { lambda, empirical, bound: (0.5 * lambda * lambda * nc2).exp(), exact })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxAveragesCheck {
    pub n: usize,
    pub p: usize,
    pub mean: f64,
    pub bound: f64,
    pub mean_pass: bool,
    pub tails: Vec<Exceedance>,
}

/// `max_j |Σ_i X_ij/n|` for an `n × p` matrix of Rademacher entries.
pub fn max_averages_monte_carlo(n: usize, p: usize, a_grid: &[f64], reps: usize, seed: u64) -> Result<MaxAveragesCheck> {
    let bound = max_averages_bound(n, p)?;
    let thresholds = a_grid.iter().map(|&a| max_averages_tail(n, p, a)).collect::<Result<Vec<_>>>()?;
    let maxima = draws(reps, seed, |rng| {
        (0..p)
            .map(|_| ((0..n).map(|_| rademacher(rng)).sum::<f64>() / n as f64).abs())
            .fold(0.0, f64::max)
    });
    let mean = maxima.iter().sum::<f64>() / reps.max(1) as f64;
    let tails = a_grid
        .iter()
        .zip(&thresholds)
        .map(|(&a, &t)| Exceedance::new(a, t, maxima.iter().filter(|&&m| m >= t).count(), reps))
        .collect();
    Ok(MaxAveragesCheck { n, p, mean, bound, mean_pass: mean <= bound, tails })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PositivePartsCheck {
    pub estimate: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Monte Carlo estimate of `E max_s [Z_s − √(H_s + s log 2)]₊²` from draws
/// `samples[(rep, s−1)]`; passes when the estimate minus three standard
/// errors is at most 1.
pub fn positive_parts_bound(samples: &Matrix, h: &[f64]) -> Result<PositivePartsCheck> {
    if samples.ncols() != h.len() {
        return Err(Error::dim("one tail constant per level is required"));
    }
    let reps = samples.nrows();
    let values: Vec<f64> = (0..reps)
        .map(|r| {
            (0..h.len())
                .map(|i| {
                    let s = (i + 1) as f64;
                    (samples[(r, i)] - (h[i] + s * std::f64::consts::LN_2).sqrt()).max(0.0).powi(2)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let n = reps.max(1) as f64;
    let estimate = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - estimate).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let stderr = (var / n).sqrt();
    Ok(PositivePartsCheck { estimate, stderr, pass: estimate - 3.0 * stderr <= 1.0 })
}

/// Realizations `X_i(t)` of a process over finitely many points: column `t`
/// holds the `n`-vector for point `t`.
#[derive(Debug, Clone)]
pub struct ProcessSample {
    pub values: Matrix,
}

impl ProcessSample {
    /// `max_t |X̄_n(t) − X̄_n(t₀)|`.
    pub fn sup_deviation(&self, t0: usize) -> f64 {
        let n = self.values.nrows() as f64;
        let means: Vec<f64> = self.values.column_iter().map(|c| c.sum() / n).collect();
        means.iter().map(|m| (m - means[t0]).abs()).fold(0.0, f64::max)
    }
}

/// Source of independent process realizations.
pub trait ProcessGenerator: Sync {
    /// Number of points.
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> ProcessSample;
}

/// `X_i(t) = ε_i t_i` with a Rademacher sequence `ε`; its increments are
/// sub-Gaussian with respect to `‖t − t̃‖_n`.
#[derive(Debug, Clone)]
pub struct RademacherProcess {
    /// Column `k` is the point `t_k ∈ ℝⁿ`.
    pub points: Matrix,
}

impl ProcessGenerator for RademacherProcess {
    fn len(&self) -> usize {
        self.points.ncols()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> ProcessSample {
        let n = self.points.nrows();
        let eps = Vector::from_fn(n, |_, _| rademacher(rng));
        let mut values = self.points.clone();
        for mut col in values.column_iter_mut() {
            col.component_mul_assign(&eps);
        }
        ProcessSample { values }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupCheck {
    pub reps: usize,
    pub mean_sup: f64,
    pub stderr: f64,
    pub expectation_bound: f64,
    pub mean_pass: bool,
    pub tails: Vec<Exceedance>,
    pub pass: bool,
}

/// Monte Carlo check of the expectation and deviation chaining bounds.
pub fn monte_carlo_sup<G: ProcessGenerator>(
    tree: &ChainTree,
    process: &G,
    reps: usize,
    a_grid: &[f64],
    seed: u64,
) -> Result<SupCheck> {
    let m = process.len();
    let bound = expectation_bound(tree, m)?;
    let thresholds = a_grid.iter().map(|&a| gamma_n_deviation(tree, a)).collect::<Result<Vec<_>>>()?;
    let sups = draws(reps, seed, |rng| process.sample(rng).sup_deviation(tree.t0));
    // strict exceedance: a degenerate process sits exactly on a zero threshold
    let n = reps.max(1) as f64;
    let mean_sup = sups.iter().sum::<f64>() / n;
    let var = sups.iter().map(|v| (v - mean_sup).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let tails: Vec<Exceedance> = a_grid
        .iter()
        .zip(&thresholds)
        .map(|(&a, &t)| Exceedance::new(a, t, sups.iter().filter(|&&s| s > t).count(), reps))
        .collect();
    let mean_pass = mean_sup <= bound;
    let pass = mean_pass && tails.iter().all(|t| t.pass);
    Ok(SupCheck { reps, mean_sup, stderr: (var / n).sqrt(), expectation_bound: bound, mean_pass, tails, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn hoeffding_arithmetic() {
        let t = hoeffding_tail_bound(&[1.0; 50], 2.0).unwrap();
        assert!((t.threshold - (4.0f64 / 50.0).sqrt()).abs() < 1e-15);
        assert!((t.threshold - 0.28284).abs() < 1e-5);
        assert!((t.prob_bound - 0.13534).abs() < 1e-5);
        let mut last = 1.0;
        for a in [1.0, 5.0, 20.0, 80.0] {
            let b = hoeffding_tail_bound(&[1.0; 5], a).unwrap().prob_bound;
            assert!(b < last);
            last = b;
        }
        assert!(hoeffding_tail_bound(&[1.0, 0.0], 1.0).is_err());
        assert!(hoeffding_tail_bound(&[1.0], 0.0).is_err());
    }

    #[test]
    fn hoeffding_frequency_below_target() {
        let r = hoeffding_monte_carlo(&[1.0; 50], &[2.0], 20_000, 3).unwrap();
        assert!(r[0].frequency <= 0.13534, "{:?}", r[0]);
    }

    #[test]
    fn max_averages_arithmetic_and_simulation() {
        assert!((max_averages_bound(100, 2).unwrap() - 0.16651).abs() < 1e-5);
        assert!((max_averages_bound(7, 1).unwrap() - (2.0 * 2f64.ln() / 7.0).sqrt()).abs() < 1e-15);
        let r = max_averages_monte_carlo(100, 2, &[1.0], 10_000, 5).unwrap();
        assert!(r.mean <= 0.16651 && r.mean_pass);
        assert!(r.tails[0].pass);
    }

    #[test]
    fn cosh_inequality_on_grid() {
        let worst = (0..=2000).map(|k| -10.0 + k as f64 * 0.01).map(cosh_log_gap).fold(f64::NEG_INFINITY, f64::max);
        assert!(worst <= 1e-15, "{worst}");
        assert!(cosh_log_gap(0.0).abs() < 1e-15);
    }

    #[test]
    fn rademacher_mgf_premise() {
        let c: Vec<f64> = (0..20).map(|i| 0.1 + 0.05 * i as f64).collect();
        for lam in [0.5, 1.0, 2.0] {
            let m = rademacher_mgf_check(&c, lam / (c.len() as f64).sqrt(), 20_000, 9).unwrap();
            assert!(m.exact <= m.bound);
            assert!(m.empirical <= m.bound * 1.05, "{m:?}");
        }
    }

    #[test]
    fn positive_parts_examples() {
        let zero = Matrix::zeros(100, 3);
        let r = positive_parts_bound(&zero, &[1.0; 3]).unwrap();
        assert_eq!(r.estimate, 0.0);

        // |N|/√2 satisfies P(Z ≥ √(H + a)) ≤ 2e^{−H−a} ≤ e^{−a} once H ≥ log 2.
        let h: Vec<f64> = (1..=5).map(|s| (2.0 * (s + 1) as f64).ln()).collect();
        let reps = 100_000;
        let mut rng = rep_rng(11, 0);
        let z = Matrix::from_fn(reps, 5, |_, _| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng).abs() / 2f64.sqrt()
        });
        let r = positive_parts_bound(&z, &h).unwrap();
        assert!(r.pass && r.estimate <= 1.0, "{r:?}");

        let one = Matrix::from_element(50, 1, 3.0);
        assert_eq!(positive_parts_bound(&one, &[1e6]).unwrap().estimate, 0.0);
    }

    #[test]
    fn singleton_process_has_zero_supremum() {
        let pts = Matrix::from_element(10, 1, 0.3);
        let tree = build_covering_chain(&distance_matrix_n(&pts), 0, 2, 10).unwrap();
        let r = monte_carlo_sup(&tree, &RademacherProcess { points: pts }, 200, &[1.0], 1).unwrap();
        assert_eq!(r.mean_sup, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn chaining_bounds_on_ball_points() {
        let mut rng = rep_rng(21, 0);
        let pts = unit_ball_points(50, 32, &mut rng);
        let tree = build_covering_chain(&distance_matrix_n(&pts), 0, 5, 50).unwrap();
        let r = monte_carlo_sup(&tree, &RademacherProcess { points: pts }, 2_000, &[1.0, 2.0, 3.0], 4).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = rep_rng(5, 3).random();
        let b: f64 = rep_rng(5, 3).random();
        let c: f64 = rep_rng(5, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
