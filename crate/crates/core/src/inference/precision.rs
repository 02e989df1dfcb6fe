//! Precision-matrix estimators and their linearization around `Θ₀`.
//!
//! With `W = Σ̂ − Σ₀` every estimator admits
//! `Θ̂_de − Θ₀ = −Θ₀WΘ₀ − rem₁ − rem₂` with `rem₁ = Θ₀W(Θ̂ − Θ₀)` and
//!
//! * small `p`: `Θ̂ = Σ̂⁻¹`, `rem₂ = 0`
//! * node-wise: `rem₂ = (Θ̂ − Θ₀)ᵀ(Σ̂Θ̂ − I)`
//! * graphical: `rem₂ = (Θ̂ − Θ₀)(Σ̂ − Θ̂⁻¹)Θ̂`

use serde::{Deserialize, Serialize};

use super::nodewise::{nodewise_sqrt_lasso, NodewiseInverse};
use crate::error::{Error, Result};
use crate::linalg::{gram, invert_symmetric, l1_operator_norm, mirror_upper, sup_norm, GramMatrix, Matrix, Vector};
use crate::solvers::{coordinate_descent, CdSettings, QuadraticProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrecisionMethod {
    SmallPInverse,
    Nodewise,
    Graphical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decomposition {
    /// `−Θ₀WΘ₀`.
    pub linear_term: Matrix,
    pub rem1: Matrix,
    pub rem2: Matrix,
    /// `‖Θ₀W‖_∞|||Θ̂ − Θ₀|||₁`.
    pub rem1_bound: f64,
    pub rem2_bound: f64,
    /// `‖Θ̂_de − Θ₀ − linear_term + rem₁ + rem₂‖_∞`.
    pub identity_defect: f64,
}

impl Decomposition {
    pub fn rem1_holds(&self) -> bool {
        sup_norm(&self.rem1) <= self.rem1_bound * (1.0 + 1e-10) + 1e-12
    }

    pub fn rem2_holds(&self) -> bool {
        sup_norm(&self.rem2) <= self.rem2_bound * (1.0 + 1e-10) + 1e-12
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecisionEstimate {
    pub theta_raw: Matrix,
    pub theta_desparsified: Matrix,
    pub method: PrecisionMethod,
    pub lambda: f64,
    pub decomposition: Option<Decomposition>,
    /// KKT residual of the underlying fit; 0 for the exact inverse.
    pub kkt_residual: f64,
}

/// `W`, `Θ₀W`, `|||Θ̂ − Θ₀|||₁` and `rem₁`.
struct Linearization {
    linear_term: Matrix,
    rem1: Matrix,
    rem1_bound: f64,
    delta: Matrix,
    delta_l1: f64,
}

fn linearize(sigma_hat: &Matrix, theta0: &Matrix, theta_raw: &Matrix) -> Result<Linearization> {
    if theta0.shape() != sigma_hat.shape() {
        return Err(Error::dim("Θ₀ and Σ̂ disagree on p"));
    }
    let sigma0 = invert_symmetric(theta0)?;
    let w = sigma_hat - sigma0;
    let tw = theta0 * &w;
    let delta = theta_raw - theta0;
    let delta_l1 = l1_operator_norm(&delta);
    Ok(Linearization {
        linear_term: -(&tw * theta0),
        rem1: &tw * &delta,
        rem1_bound: sup_norm(&tw) * delta_l1,
        delta,
        delta_l1,
    })
}

fn assemble(lin: Linearization, rem2: Matrix, rem2_bound: f64, theta_de: &Matrix, theta0: &Matrix) -> Decomposition {
    let defect = sup_norm(&(theta_de - theta0 - &lin.linear_term + &lin.rem1 + &rem2));
    Decomposition {
        linear_term: lin.linear_term,
        rem1: lin.rem1,
        rem2,
        rem1_bound: lin.rem1_bound,
        rem2_bound,
        identity_defect: defect,
    }
}

/// `Θ̂ = Σ̂⁻¹`; the decomposition is filled in when `Θ₀` is given.
pub fn precision_smallp(sigma_hat: &GramMatrix, theta0: Option<&Matrix>) -> Result<PrecisionEstimate> {
    let s = sigma_hat.as_matrix();
    let theta = invert_symmetric(s)?;
    let decomposition = theta0
        .map(|t0| {
            let lin = linearize(s, t0, &theta)?;
            let p = s.nrows();
            Ok::<_, Error>(assemble(lin, Matrix::zeros(p, p), 0.0, &theta, t0))
        })
        .transpose()?;
    Ok(PrecisionEstimate {
        theta_desparsified: theta.clone(),
        theta_raw: theta,
        method: PrecisionMethod::SmallPInverse,
        lambda: 0.0,
        decomposition,
        kkt_residual: 0.0,
    })
}

/// `Θ̂ + Θ̂ᵀ − Θ̂ᵀΣ̂Θ̂`, symmetrized from its upper triangle.
pub fn desparsify_nodewise(theta: &Matrix, sigma_hat: &Matrix) -> Matrix {
    let quad = theta.tr_mul(&(sigma_hat * theta));
    mirror_upper(theta + theta.transpose() - quad)
}

/// De-sparsified node-wise precision estimate from a design matrix.
pub fn desparsified_nodewise_precision(x: &Matrix, lambda: f64, theta0: Option<&Matrix>) -> Result<PrecisionEstimate> {
    let node = nodewise_sqrt_lasso(x, lambda)?;
    let sigma_hat = gram(x)?;
    nodewise_estimate(&node, &sigma_hat, theta0)
}

/// Same as [`desparsified_nodewise_precision`] for an already computed
/// surrogate inverse.
pub fn nodewise_estimate(node: &NodewiseInverse, sigma_hat: &GramMatrix, theta0: Option<&Matrix>) -> Result<PrecisionEstimate> {
    let s = sigma_hat.as_matrix();
    if node.p() != s.nrows() {
        return Err(Error::dim("surrogate inverse and Σ̂ disagree on p"));
    }
    let theta = &node.theta;
    let de = desparsify_nodewise(theta, s);
    let p = s.nrows();
    let kkt = s * theta - Matrix::identity(p, p);
    let (diag, off, _) = node.identity_defects(sigma_hat);
    let kkt_residual = diag.max(off.max(0.0));
    let decomposition = theta0
        .map(|t0| {
            let lin = linearize(s, t0, theta)?;
            let rem2 = lin.delta.tr_mul(&kkt);
            let bound = node.lambda * node.max_inverse_tau_tilde() * lin.delta_l1;
            Ok::<_, Error>(assemble(lin, rem2, bound, &de, t0))
        })
        .transpose()?;
    Ok(PrecisionEstimate {
        theta_raw: theta.clone(),
        theta_desparsified: de,
        method: PrecisionMethod::Nodewise,
        lambda: node.lambda,
        decomposition,
        kkt_residual,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct GraphicalSettings {
    /// Required KKT residual at exit.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for GraphicalSettings {
    fn default() -> Self {
        Self { kkt_tol: 1e-9, max_sweeps: 1_000 }
    }
}

/// KKT residual of `Σ̂ − Θ̂⁻¹ + λẐ = 0`: diagonal defect, off-diagonal excess
/// over `λ`, and sign mismatch on the active set, whichever is largest.
pub fn graphical_kkt(sigma_hat: &Matrix, theta: &Matrix, lambda: f64) -> Result<f64> {
    let inv = invert_symmetric(theta)?;
    let gap = &inv - sigma_hat;
    let p = theta.nrows();
    let mut worst = 0.0f64;
    for j in 0..p {
        worst = worst.max(gap[(j, j)].abs());
        for k in (0..p).filter(|&k| k != j) {
            let g = gap[(k, j)];
            let t = theta[(k, j)];
            let r = if t != 0.0 { (g - lambda * t.signum()).abs() } else { (g.abs() - lambda).max(0.0) };
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Graphical Lasso `argmin trace(Σ̂Θ) − log det Θ + λ‖Θ‖_{1,off}` over
/// `Θ ≻ 0`, normalized so that its KKT conditions read `Σ̂ − Θ̂⁻¹ + λẐ = 0`.
///
/// Block coordinate descent on `W = Θ̂⁻¹`: each column update is a Lasso in
/// covariance form with Gram `W_{−j,−j}` and target `Σ̂_{−j,j}`.
pub fn graphical_lasso(sigma_hat: &GramMatrix, lambda: f64) -> Result<PrecisionEstimate> {
    graphical_lasso_with(sigma_hat, lambda, &GraphicalSettings::default())
}

pub fn graphical_lasso_with(sigma_hat: &GramMatrix, lambda: f64, settings: &GraphicalSettings) -> Result<PrecisionEstimate> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!("λ must be nonnegative, got {lambda}")));
    }
    let s = sigma_hat.as_matrix();
    let p = s.nrows();
    if (0..p).any(|j| !(s[(j, j)] > 0.0)) {
        return Err(Error::domain("Σ̂ must have a strictly positive diagonal"));
    }
    let cd = CdSettings { change_tol: 1e-12, kkt_tol: 1e-12, ..CdSettings::default() };
    // Start dual-feasible, `|W − Σ̂|_off ≤ λ`, and positive definite; each
    // exact block update then keeps `W ≻ 0`.
    let off_max = (0..p).flat_map(|j| (0..p).filter(move |&k| k != j).map(move |k| (j, k))).map(|(j, k)| s[(j, k)].abs()).fold(0.0, f64::max);
    let t = if off_max > 0.0 { (lambda / off_max).min(1.0) } else { 1.0 };
    let mut w = Matrix::from_fn(p, p, |j, k| if j == k { s[(j, j)] } else { (1.0 - t) * s[(j, k)] });
    let mut betas: Vec<Vector> = (0..p).map(|_| Vector::zeros(p.saturating_sub(1))).collect();
    let mut last = f64::INFINITY;

    for _ in 0..settings.max_sweeps {
        for j in 0..p {
            let idx: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let m = idx.len();
            if m == 0 {
                continue;
            }
            let w11 = Matrix::from_fn(m, m, |a, b| w[(idx[a], idx[b])]);
            let s12 = Vector::from_fn(m, |a, _| s[(idx[a], j)]);
            let problem = QuadraticProblem::new(w11.clone(), s12, s[(j, j)])?;
            let out = coordinate_descent(&problem, lambda, Some(betas[j].clone()), &cd)?;
            let w12 = &w11 * &out.beta;
            for (a, &k) in idx.iter().enumerate() {
                w[(k, j)] = w12[a];
                w[(j, k)] = w12[a];
            }
            betas[j] = out.beta;
        }
        let theta = theta_from_blocks(&w, &betas);
        last = graphical_kkt(s, &theta, lambda).unwrap_or(f64::INFINITY);
        if last <= settings.kkt_tol {
            return Ok(PrecisionEstimate {
                theta_desparsified: theta.clone(),
                theta_raw: theta,
                method: PrecisionMethod::Graphical,
                lambda,
                decomposition: None,
                kkt_residual: last,
            });
        }
    }
    Err(Error::Convergence { iterations: settings.max_sweeps, violation: last, last_iterate: Vec::new() })
}

/// `θ_jj = 1/(w_jj − w_{12}ᵀβ_j)`, `θ_{−j,j} = −β_jθ_jj`, symmetrized.
fn theta_from_blocks(w: &Matrix, betas: &[Vector]) -> Matrix {
    let p = w.nrows();
    let mut theta = Matrix::zeros(p, p);
    for j in 0..p {
        let idx: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let w12 = Vector::from_fn(idx.len(), |a, _| w[(idx[a], j)]);
        let tjj = 1.0 / (w[(j, j)] - w12.dot(&betas[j]));
        theta[(j, j)] = tjj;
        for (a, &k) in idx.iter().enumerate() {
            theta[(k, j)] = -betas[j][a] * tjj;
        }
    }
    let sym = (&theta + theta.transpose()) * 0.5;
    // Keep exact zeros of the column solutions exactly zero.
    Matrix::from_fn(p, p, |a, b| if theta[(a, b)] == 0.0 && theta[(b, a)] == 0.0 { 0.0 } else { sym[(a, b)] })
}

/// Recovers `Ẑ = (Θ̂⁻¹ − Σ̂)/λ`, clipped to `[−1, 1]`, with the largest clip.
pub fn recover_z(theta: &Matrix, sigma_hat: &Matrix, lambda: f64) -> Result<(Matrix, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::domain("Ẑ is undefined at λ = 0"));
    }
    let raw = (invert_symmetric(theta)? - sigma_hat) / lambda;
    let clip = raw.iter().map(|z| (z.abs() - 1.0).max(0.0)).fold(0.0, f64::max);
    Ok((raw.map(|z| z.clamp(-1.0, 1.0)), clip))
}

/// `Θ̂_de = 2Θ̂ − Θ̂Σ̂Θ̂`, with the decomposition when `Θ₀` is given.
pub fn desparsified_graphical(
    theta: &Matrix,
    sigma_hat: &GramMatrix,
    theta0: Option<&Matrix>,
    lambda: f64,
) -> Result<PrecisionEstimate> {
    let s = sigma_hat.as_matrix();
    if theta.shape() != s.shape() {
        return Err(Error::dim("Θ̂ and Σ̂ disagree on p"));
    }
    let de = mirror_upper(theta * 2.0 - theta * s * theta);
    let inv = invert_symmetric(theta)?;
    let decomposition = theta0
        .map(|t0| {
            let lin = linearize(s, t0, theta)?;
            let rem2 = &lin.delta * (s - &inv) * theta;
            let bound = lambda * l1_operator_norm(theta) * lin.delta_l1;
            Ok::<_, Error>(assemble(lin, rem2, bound, &de, t0))
        })
        .transpose()?;
    let kkt_residual = graphical_kkt(s, theta, lambda)?;
    Ok(PrecisionEstimate {
        theta_raw: theta.clone(),
        theta_desparsified: de,
        method: PrecisionMethod::Graphical,
        lambda,
        decomposition,
        kkt_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::super::equal_correlation_theta;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn correlated_x(n: usize, p: usize, rho: f64, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = ((1.0 - rho).sqrt(), rho.sqrt());
        let mut x = Matrix::zeros(n, p);
        for i in 0..n {
            let f: f64 = StandardNormal.sample(&mut rng);
            for j in 0..p {
                let e: f64 = StandardNormal.sample(&mut rng);
                x[(i, j)] = a * e + b * f;
            }
        }
        x
    }

    #[test]
    fn small_p_at_population_gram() {
        let t0 = equal_correlation_theta(3, 0.4).unwrap().theta0;
        let s0 = GramMatrix::from_matrix(invert_symmetric(&t0).unwrap()).unwrap();
        let est = precision_smallp(&s0, Some(&t0)).unwrap();
        let d = est.decomposition.unwrap();
        assert!((&est.theta_raw - &t0).amax() < 1e-12);
        assert!(sup_norm(&d.rem1) < 1e-12);
        assert!(sup_norm(&d.linear_term) < 1e-12);
    }

    #[test]
    fn small_p_decomposition_holds() {
        let t0 = equal_correlation_theta(2, 0.3).unwrap().theta0;
        for seed in 0..10 {
            let x = correlated_x(30, 2, 0.3, seed);
            let est = precision_smallp(&gram(&x).unwrap(), Some(&t0)).unwrap();
            let d = est.decomposition.unwrap();
            assert!(d.identity_defect < 1e-12);
            assert!(d.rem1_holds());
        }
    }

    #[test]
    fn small_p_remainder_is_second_order() {
        let x = correlated_x(10_000, 4, 0.0, 9);
        let t0 = Matrix::identity(4, 4);
        let d = precision_smallp(&gram(&x).unwrap(), Some(&t0)).unwrap().decomposition.unwrap();
        assert!(sup_norm(&d.rem1) < 0.1 * sup_norm(&d.linear_term));
    }

    #[test]
    fn nodewise_desparsified_is_symmetric_and_decomposes() {
        let (n, p, rho) = (80, 12, 0.3);
        let t0 = equal_correlation_theta(p, rho).unwrap().theta0;
        for seed in 0..4 {
            let x = correlated_x(n, p, rho, seed);
            let est = desparsified_nodewise_precision(&x, ((p as f64).ln() / n as f64).sqrt(), Some(&t0)).unwrap();
            let de = &est.theta_desparsified;
            assert!((de - de.transpose()).amax() <= 1e-12);
            let d = est.decomposition.unwrap();
            assert!(d.identity_defect < 1e-10, "defect {}", d.identity_defect);
            assert!(d.rem1_holds() && d.rem2_holds());
        }
    }

    #[test]
    fn nodewise_exact_inverse_is_a_fixed_point() {
        let x = correlated_x(50, 5, 0.2, 1);
        let est = desparsified_nodewise_precision(&x, 0.0, None).unwrap();
        assert!((&est.theta_desparsified - &est.theta_raw).amax() < 1e-10);
    }

    #[test]
    fn graphical_unpenalized_is_the_inverse() {
        let g = gram(&correlated_x(40, 5, 0.3, 2)).unwrap();
        let est = graphical_lasso(&g, 0.0).unwrap();
        assert!((&est.theta_raw - invert_symmetric(g.as_matrix()).unwrap()).amax() < 1e-6);
    }

    #[test]
    fn graphical_large_penalty_is_diagonal() {
        let g = gram(&correlated_x(40, 5, 0.3, 3)).unwrap();
        let s = g.as_matrix();
        let max_off = (0..5).flat_map(|j| (0..5).filter(move |&k| k != j).map(move |k| (j, k))).map(|(j, k)| s[(j, k)].abs()).fold(0.0, f64::max);
        let est = graphical_lasso(&g, max_off).unwrap();
        for j in 0..5 {
            for k in 0..5 {
                let want = if j == k { 1.0 / s[(j, j)] } else { 0.0 };
                assert!((est.theta_raw[(j, k)] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn graphical_two_by_two_kkt() {
        let g = GramMatrix::from_matrix(Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let est = graphical_lasso(&g, 0.1).unwrap();
        assert!(graphical_kkt(g.as_matrix(), &est.theta_raw, 0.1).unwrap() <= 1e-6);
        // Off-diagonal of Θ̂⁻¹ sits at 0.5 − 0.1 with unit diagonal.
        let inv = invert_symmetric(&est.theta_raw).unwrap();
        assert!((inv[(0, 1)] - 0.4).abs() < 1e-6 && (inv[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(est.theta_raw.clone().symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn graphical_desparsified_identities() {
        let (n, p, rho) = (60, 5, 0.3);
        let t0 = equal_correlation_theta(p, rho).unwrap().theta0;
        let g = gram(&correlated_x(n, p, rho, 5)).unwrap();
        let lam = 0.1;
        let est = graphical_lasso(&g, lam).unwrap();
        let de = desparsified_graphical(&est.theta_raw, &g, Some(&t0), lam).unwrap();
        let (z, clip) = recover_z(&est.theta_raw, g.as_matrix(), lam).unwrap();
        assert!(clip < 1e-5);
        let alt = &est.theta_raw + &est.theta_raw * z * &est.theta_raw * lam;
        assert!((&de.theta_desparsified - alt).amax() <= 1e-6);
        let d = de.decomposition.unwrap();
        assert!(d.identity_defect < 1e-10);
        assert!(d.rem1_holds() && d.rem2_holds());

        let exact = invert_symmetric(g.as_matrix()).unwrap();
        let fixed = desparsified_graphical(&exact, &g, None, 0.0).unwrap();
        assert!((&fixed.theta_desparsified - &exact).amax() < 1e-10);
    }
}
