//! ℓ1-restricted oracle
//! `β* = argmin{‖X(β − β⁰)‖²_n + λ*²|S_β|/φ̂²(L, S_β) : ‖β‖₁ ≥ ‖β⁰‖₁}`
//! by exhaustive enumeration of supports.
//!
//! For a fixed support `T` and sign pattern the feasible cell is either the
//! interior `‖β_T‖₁ > ‖β⁰‖₁`, where the unconstrained least-squares point is
//! the candidate, or the face `sᵀβ_T = ‖β⁰‖₁`, handled as an
//! equality-constrained least-squares problem. Points with a zero coordinate
//! belong to a smaller support and are discarded here.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::compatibility::{compatibility_constant, CompatSettings};
use crate::error::{Error, Result};
use crate::linalg::{l1_norm, DesignData, GramMatrix, IndexSet, Matrix, Vector};

/// Largest support size the enumeration accepts.
pub const MAX_SUPPORT_CAP: usize = 6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestrictedOracle {
    pub beta: Vec<f64>,
    pub support: IndexSet,
    pub objective: f64,
    /// `‖X(β* − β⁰)‖²_n`.
    pub approximation_error: f64,
    /// `φ̂²(L, S*)`; absent for the empty support.
    pub phi_sq: Option<f64>,
    /// `λ*‖β* − β⁰‖₁`.
    pub lemma_lhs: f64,
    /// `‖X(β* − β⁰)‖²_n + λ*²|S*|/φ̂²(1, S*)`.
    pub lemma_rhs: f64,
    pub lemma_holds: bool,
}

fn subsets(p: usize, cap: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    fn extend(start: usize, p: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for j in start..p {
            cur.push(j);
            out.push(cur.clone());
            if cur.len() < cap {
                extend(j + 1, p, cap, cur, out);
            }
            cur.pop();
        }
    }
    if cap > 0 {
        extend(0, p, cap, &mut Vec::new(), &mut out);
    }
    out.sort_by_key(|s| s.len());
    out
}

fn solve_kkt(a: Matrix, b: Vector) -> Option<Vector> {
    let lu = a.clone().lu();
    match lu.solve(&b) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Some(x),
        _ => a.svd(true, true).solve(&b, 1e-12).ok(),
    }
}

/// Best coefficient vector with support exactly `t` and `‖β‖₁ ≥ radius`,
/// returned with its approximation error.
fn best_on_support(gram: &Matrix, c: &Vector, f_sq: f64, t: &[usize], radius: f64) -> Option<(Vector, f64)> {
    let k = t.len();
    let p = gram.nrows();
    let sub = Matrix::from_fn(k, k, |a, b| gram[(t[a], t[b])]);
    let ct = Vector::from_fn(k, |a, _| c[t[a]]);
    let error = |b: &Vector| (b.dot(&(&sub * b)) - 2.0 * b.dot(&ct) + f_sq).max(0.0);
    let nonzero = |b: &Vector| b.iter().all(|v| v.abs() > 1e-12);
    let mut best: Option<(Vector, f64)> = None;
    let mut consider = |b: Vector| {
        let e = error(&b);
        if best.as_ref().is_none_or(|(_, be)| e < *be) {
            best = Some((b, e));
        }
    };

    if let Some(ls) = solve_kkt(sub.clone(), ct.clone()) {
        if nonzero(&ls) && l1_norm(ls.as_slice()) >= radius {
            consider(ls);
        }
    }
    for mask in 0u32..(1 << k) {
        let s = Vector::from_fn(k, |a, _| if mask >> a & 1 == 1 { -1.0 } else { 1.0 });
        let mut kkt = Matrix::zeros(k + 1, k + 1);
        kkt.view_mut((0, 0), (k, k)).copy_from(&sub);
        for a in 0..k {
            kkt[(a, k)] = s[a];
            kkt[(k, a)] = s[a];
        }
        let mut rhs = Vector::zeros(k + 1);
        rhs.rows_mut(0, k).copy_from(&ct);
        rhs[k] = radius;
        if let Some(sol) = solve_kkt(kkt, rhs) {
            let b = sol.rows(0, k).clone_owned();
            let on_face = (s.dot(&b) - radius).abs() <= 1e-9 * (1.0 + radius);
            if on_face && b.iter().zip(s.iter()).all(|(v, sg)| v * sg > 1e-12) {
                consider(b);
            }
        }
    }
    best.map(|(b, e)| {
        let mut full = Vector::zeros(p);
        for (a, &j) in t.iter().enumerate() {
            full[j] = b[a];
        }
        (full, e)
    })
}

/// Exhaustive ℓ1-restricted oracle over supports of size at most `support_cap`.
pub fn ell1_restricted_oracle(
    data: &DesignData,
    beta0: &Vector,
    lambda_star: f64,
    l: f64,
    support_cap: usize,
    settings: &CompatSettings,
) -> Result<RestrictedOracle> {
    if support_cap > MAX_SUPPORT_CAP {
        return Err(Error::domain(format!("support cap {support_cap} exceeds {MAX_SUPPORT_CAP}")));
    }
    if beta0.len() != data.p() {
        return Err(Error::dim("β⁰ and design disagree on p"));
    }
    if !(lambda_star > 0.0) || !(l > 0.0) {
        return Err(Error::domain("λ* and L must be positive"));
    }
    let p = data.p();
    let gram: GramMatrix = data.gram();
    let sigma = gram.as_matrix();
    // Target f⁰ = Xβ⁰ enters only through Σ̂β⁰ and β⁰ᵀΣ̂β⁰.
    let c = sigma * beta0;
    let f_sq = beta0.dot(&c);
    let radius = l1_norm(beta0.as_slice());

    let mut phi_cache: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut phi = |t: &[usize], l: f64| -> Result<f64> {
        if let Some(v) = phi_cache.get(t) {
            return Ok(*v);
        }
        let s = IndexSet::new(t.iter().copied(), p)?;
        let v = compatibility_constant(&gram, l, &s, settings)?.value;
        phi_cache.insert(t.to_vec(), v);
        Ok(v)
    };

    // (β, support, objective, approximation error, φ̂²)
    type Candidate = (Vector, Vec<usize>, f64, f64, Option<f64>);
    let mut best: Option<Candidate> = None;
    for t in subsets(p, support_cap.min(p)) {
        let candidate = if t.is_empty() {
            (radius == 0.0).then(|| (Vector::zeros(p), f_sq))
        } else {
            best_on_support(sigma, &c, f_sq, &t, radius)
        };
        let Some((beta, err)) = candidate else { continue };
        let phi_sq = if t.is_empty() { None } else { Some(phi(&t, l)?) };
        let penalty = phi_sq.map_or(0.0, |v| lambda_star * lambda_star * t.len() as f64 / v);
        let objective = err + penalty;
        if best.as_ref().is_none_or(|b| objective < b.2) {
            best = Some((beta, t, objective, err, phi_sq));
        }
    }
    let (beta, t, objective, err, phi_sq) =
        best.ok_or_else(|| Error::domain("no feasible β within the support cap"))?;

    let lemma_lhs = lambda_star * l1_norm((&beta - beta0).as_slice());
    let lemma_rhs = if t.is_empty() {
        err
    } else {
        let s = IndexSet::new(t.iter().copied(), p)?;
        let phi_one = compatibility_constant(&gram, 1.0, &s, settings)?.value;
        err + lambda_star * lambda_star * t.len() as f64 / phi_one
    };
    Ok(RestrictedOracle {
        beta: beta.as_slice().to_vec(),
        support: IndexSet::new(t, p)?,
        objective,
        approximation_error: err,
        phi_sq,
        lemma_lhs,
        lemma_rhs,
        lemma_holds: lemma_lhs <= lemma_rhs + 1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn identity_data(p: usize) -> DesignData {
        DesignData::new(Matrix::identity(p, p) * (p as f64).sqrt(), Vector::zeros(p)).unwrap()
    }

    #[test]
    fn zero_target_gives_zero() {
        let r = ell1_restricted_oracle(&identity_data(3), &Vector::zeros(3), 0.5, 1.0, 3, &Default::default()).unwrap();
        assert_eq!(r.beta, vec![0.0; 3]);
        assert_eq!(r.objective, 0.0);
        assert!(r.support.is_empty());
    }

    #[test]
    fn identity_design_recovers_target() {
        let b0 = Vector::from_vec(vec![1.0, 0.0]);
        let r = ell1_restricted_oracle(&identity_data(2), &b0, 0.05, 1.0, 2, &Default::default()).unwrap();
        assert!((Vector::from_vec(r.beta.clone()) - &b0).amax() < 1e-10);
        assert_eq!(r.support.as_slice(), &[0]);
        // Hand comparison: {0} costs λ*², {1} costs 2 + λ*², {0,1} cannot beat {0}.
        assert!((r.objective - 0.0025).abs() < 1e-8);
        assert!(r.lemma_holds);
    }

    #[test]
    fn cap_is_enforced() {
        let e = ell1_restricted_oracle(&identity_data(2), &Vector::zeros(2), 1.0, 1.0, 7, &Default::default());
        assert!(matches!(e, Err(Error::Domain(_))));
    }

    #[test]
    fn lemma_holds_on_random_designs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let x = Matrix::from_fn(12, 5, |_, _| StandardNormal.sample(&mut rng));
            let data = DesignData::new(x, Vector::zeros(12)).unwrap();
            let b0 = Vector::from_fn(5, |j, _| if j < 2 { 1.0 } else { 0.3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) });
            for lam in [0.1, 0.5, 2.0] {
                let r = ell1_restricted_oracle(&data, &b0, lam, 2.0, 3, &Default::default()).unwrap();
                assert!(l1_norm(&r.beta) >= l1_norm(b0.as_slice()) - 1e-9);
                assert!(r.lemma_holds, "{} > {}", r.lemma_lhs, r.lemma_rhs);
            }
        }
    }

    #[test]
    fn subset_enumeration_counts() {
        assert_eq!(subsets(5, 2).len(), 1 + 5 + 10);
        assert_eq!(subsets(3, 0).len(), 1);
    }
}
