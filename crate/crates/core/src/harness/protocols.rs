use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{ExperimentConfig, Protocol};
use super::data::{equal_correlation_design, generate_dataset, Dataset};
use super::oracles::{compat_random_search, sqrt_lasso_sigma_grid};
use super::report::{flag_count, max_value, Check, RepRecord};
use crate::chaining::{
    build_covering_chain, deviation_remark, distance_matrix_n, hoeffding_monte_carlo, max_averages_monte_carlo,
    monte_carlo_sup, rep_rng, unit_ball_points, Exceedance, RademacherProcess,
};
use crate::compat::{
    compatibility_constant, evaluate_bound, lambda_max_noise, theoretical_lambda, BoundInputs, CompatSettings, TheoremId, ETA,
};
use crate::error::{Error, Result};
use crate::inference::{
    confidence_intervals, desparsified_graphical, desparsify, equal_correlation_theta, graphical_lasso, initial_estimate,
    nodewise_estimate, nodewise_sqrt_lasso, precision_smallp, sqnorm_linearity_check,
};
use crate::linalg::{gram, invert_symmetric, l1_operator_norm, norm_n, soft_threshold, DesignData, IndexSet, Matrix, Vector};
use crate::solvers::{kkt_certificate, penalized_rss_identity, solve_lasso, solve_lasso_scaled, solve_scaled_lasso, solve_sqrt_lasso};

pub(crate) type Outcome = (Vec<RepRecord>, Vec<Check>);

/// Tolerance on every KKT residual in the suite.
pub const KKT_TOL: f64 = 1e-6;

/// Runs `f` on replications `0..reps` in parallel, each with its own stream
/// of `seed`; results come back in replication order.
pub(crate) fn per_rep<T: Send>(
    seed: u64,
    reps: usize,
    f: impl Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..reps)
        .into_par_iter()
        .map(|rep| f(rep, &mut rep_rng(seed, rep as u64)).map_err(|e| Error::Rep { rep, seed, source: Box::new(e) }))
        .collect()
}

/// Seed of an independent sub-experiment.
fn substream(seed: u64, k: u64) -> u64 {
    seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn dims(cfg: &ExperimentConfig) -> Vec<usize> {
    if cfg.grid_p.is_empty() {
        vec![cfg.p]
    } else {
        cfg.grid_p.clone()
    }
}

/// `2·√(2(log 2p + 1)/n)·σ`, the default Lasso level.
pub fn default_lasso_lambda(n: usize, p: usize, sigma_proxy: f64) -> Result<f64> {
    let proxy = if sigma_proxy > 0.0 { sigma_proxy } else { 1.0 };
    Ok(2.0 * theoretical_lambda(n, p, 1.0)? * proxy)
}

/// `√(2(log 2p + 1)/n)`, the default scale-free level.
pub fn default_scale_free_lambda(n: usize, p: usize) -> Result<f64> {
    theoretical_lambda(n, p, 1.0)
}

fn max_check(name: &str, records: &[RepRecord], key: &str, limit: f64) -> Check {
    Check::at_most(name, max_value(records, key), limit)
}

/// All records carrying `flag` have it set.
fn all_true(name: &str, records: &[RepRecord], flag: &str) -> Check {
    let (n, t) = flag_count(records, flag);
    Check::at_least(name, (n > 0).then(|| t as f64 / n as f64), 1.0).with_detail(format!("{t}/{n}"))
}

pub(crate) fn run_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.protocol {
        Protocol::SoftThreshold => soft_threshold_protocol(cfg),
        Protocol::Kkt => kkt_protocol(cfg),
        Protocol::NormalEquations => normal_equations_protocol(cfg),
        Protocol::FixedPoint => fixed_point_protocol(cfg),
        Protocol::EqualCorrelation => equal_correlation_protocol(cfg),
        Protocol::Compatibility => compatibility_protocol(cfg),
        Protocol::OracleInequality => oracle_inequality_protocol(cfg),
        Protocol::SqrtOracleInequality => sqrt_oracle_protocol(cfg),
        Protocol::Hoeffding => hoeffding_protocol(cfg),
        Protocol::MaxAverages => max_averages_protocol(cfg),
        Protocol::Chaining => chaining_protocol(cfg),
        Protocol::Desparsified => desparsified_protocol(cfg),
        Protocol::Precision => precision_protocol(cfg),
        Protocol::Determinism => determinism_protocol(cfg),
    }
}

fn soft_threshold_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut records = Vec::new();
    for (k, d) in dims(cfg).into_iter().enumerate() {
        let recs = per_rep(substream(cfg.seed(), k as u64), cfg.reps, |rep, rng| {
            let z = Matrix::from_fn(d, d, |_, _| normal(rng));
            let x = nalgebra::QR::new(z).q() * (d as f64).sqrt();
            let y = Vector::from_fn(d, |_, _| normal(rng));
            let data = DesignData::new(x, y)?;
            let score = data.xty();
            let lambda = rng.random_range(0.05..1.2) * score.amax();
            let fit = solve_lasso(&data, lambda)?;
            let diff = (0..d).map(|j| (fit.beta()[j] - soft_threshold(score[j], lambda)).abs()).fold(0.0, f64::max);
            let mut r = RepRecord::labelled(rep, format!("n=p={d}"));
            r.value("dim", d as f64).value("lambda", lambda).value("max_abs_diff", diff);
            r.value("kkt", kkt_certificate(&data, &fit, lambda)?);
            Ok(r)
        })?;
        records.extend(recs);
    }
    let checks = vec![max_check("max-abs-diff", &records, "max_abs_diff", 1e-8), max_check("kkt", &records, "kkt", KKT_TOL)];
    Ok((records, checks))
}

fn kkt_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (n, p) = (cfg.n, cfg.p);
    let lam = cfg.lambda.map_or_else(|| default_lasso_lambda(n, p, cfg.sigma), Ok)?;
    let lam_sf = default_scale_free_lambda(n, p)?;
    let q = p.min(20);
    let lam_g = crate::inference::default_nodewise_lambda(n, q);
    let records = per_rep(cfg.seed(), cfg.reps, |rep, rng| {
        let d = generate_dataset(cfg, rng)?;
        let data = &d.data;
        let mut r = RepRecord::new(rep);
        let lasso = solve_lasso(data, lam)?;
        r.value("kkt_lasso", kkt_certificate(data, &lasso, lasso.lambda_eff())?);
        let sq = solve_sqrt_lasso(data, lam_sf)?;
        r.value("kkt_sqrt", kkt_certificate(data, sq.base(), sq.base().lambda_eff())?);
        let sc = solve_scaled_lasso(data, lam_sf)?;
        r.value("kkt_scaled", kkt_certificate(data, sc.base(), sc.base().lambda_eff())?);
        let node = nodewise_sqrt_lasso(data.x(), cfg.lambda_low_or_default(n, p))?;
        r.value("kkt_nodewise", node.kkt.iter().copied().fold(0.0, f64::max));
        let sub = data.x().columns(0, q).clone_owned();
        let g = graphical_lasso(&gram(&sub)?, lam_g)?;
        r.value("kkt_graphical", g.kkt_residual);
        Ok(r)
    })?;
    let checks = ["lasso", "sqrt", "scaled", "nodewise", "graphical"]
        .iter()
        .map(|k| max_check(&format!("kkt-{k}"), &records, &format!("kkt_{k}"), KKT_TOL))
        .collect();
    Ok((records, checks))
}

fn normal_equations_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let lam = cfg.lambda.map_or_else(|| default_scale_free_lambda(cfg.n, cfg.p), Ok)?;
    let records = per_rep(cfg.seed(), cfg.reps, |rep, rng| {
        let d = generate_dataset(cfg, rng)?;
        let sigma = rng.random_range(0.2..2.0);
        let fit = solve_lasso_scaled(&d.data, lam, sigma)?;
        let mut r = RepRecord::new(rep);
        r.value("sigma", sigma).value("identity_residual", penalized_rss_identity(&d.data, &fit, lam, sigma)?);
        r.value("kkt", kkt_certificate(&d.data, &fit, fit.lambda_eff())?);
        Ok(r)
    })?;
    let checks = vec![
        max_check("normal-equations", &records, "identity_residual", 1e-8),
        max_check("kkt", &records, "kkt", KKT_TOL),
    ];
    Ok((records, checks))
}

fn fixed_point_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let lam = cfg.lambda.map_or_else(|| default_scale_free_lambda(cfg.n, cfg.p), Ok)?;
    let records = per_rep(cfg.seed(), cfg.reps, |rep, rng| {
        let d = generate_dataset(cfg, rng)?;
        let data = &d.data;
        let mut r = RepRecord::new(rep);
        let sq = solve_sqrt_lasso(data, lam)?;
        let resid_n = norm_n(sq.base().residual().as_slice())?;
        r.value("sqrt_sigma", sq.base().sigma());
        r.value("sqrt_fixed_point", (sq.base().sigma() - resid_n).abs());
        r.value("sqrt_fixed_point_squared", sq.fixed_point_residual());
        r.value("kkt_sqrt", kkt_certificate(data, sq.base(), sq.base().lambda_eff())?);
        let sc = solve_scaled_lasso(data, lam)?;
        r.value("scaled_fixed_point", sc.fixed_point_residual());
        r.value("kkt_scaled", kkt_certificate(data, sc.base(), sc.base().lambda_eff())?);
        let oracle = sqrt_lasso_sigma_grid(data, lam, 200)?;
        r.value("oracle_sigma", oracle.sigma);
        r.value("oracle_sigma_diff", (oracle.sigma - sq.base().sigma()).abs());
        r.value("oracle_beta_diff", (&oracle.beta - sq.beta()).amax());
        Ok(r)
    })?;
    let checks = vec![
        max_check("sqrt-fixed-point", &records, "sqrt_fixed_point", 1e-8),
        max_check("sqrt-fixed-point-squared", &records, "sqrt_fixed_point_squared", 1e-8),
        max_check("scaled-fixed-point", &records, "scaled_fixed_point", 1e-8),
        max_check("oracle-sigma", &records, "oracle_sigma_diff", 1e-4),
        max_check("oracle-beta", &records, "oracle_beta_diff", 1e-4),
        max_check("kkt-sqrt", &records, "kkt_sqrt", KKT_TOL),
        max_check("kkt-scaled", &records, "kkt_scaled", KKT_TOL),
    ];
    Ok((records, checks))
}

fn equal_correlation_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let rhos = if cfg.grid_rho.is_empty() { vec![cfg.rho] } else { cfg.grid_rho.clone() };
    let mut records = Vec::new();
    for p in dims(cfg) {
        for &rho in &rhos {
            let e = equal_correlation_theta(p, rho)?;
            let direct = l1_operator_norm(&e.theta0);
            let mut r = RepRecord::labelled(records.len(), format!("p={p} rho={rho}"));
            r.value("p", p as f64).value("rho", rho);
            r.value("identity_defect", (&e.theta0 * &e.sigma0 - Matrix::identity(p, p)).amax());
            r.value("l1_direct", direct).value("l1_formula", e.l1_norm).value("formula_diff", (direct - e.l1_norm).abs());
            r.value("bound", e.bound).value("bound_excess", direct - e.bound);
            records.push(r);
        }
    }
    let checks = vec![
        max_check("inverse", &records, "identity_defect", 1e-10),
        max_check("l1-formula", &records, "formula_diff", 1e-10),
        max_check("l1-bound", &records, "bound_excess", 0.0),
    ];
    Ok((records, checks))
}

/// Random-search samples per compatibility case.
pub const COMPAT_ORACLE_SAMPLES: usize = 100_000;

fn compatibility_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let settings = CompatSettings::default();
    let dims = if cfg.grid_p.is_empty() { vec![2, 3, 4, 5, 6] } else { cfg.grid_p.clone() };
    let mut cases = Vec::new();
    for &p in &dims {
        for k in 1..=p.min(2) {
            for &l in &cfg.compat_l {
                cases.push((p, k, l));
            }
        }
    }
    let seed = cfg.seed();
    let designs: Vec<Matrix> = dims.iter().map(|&p| equal_correlation_design(cfg.n, p, cfg.rho, &mut rep_rng(seed, p as u64))).collect();
    let oracle_seed = substream(seed, 1);
    let mut records = per_rep(oracle_seed, cases.len(), |i, rng| {
        let (p, k, l) = cases[i];
        let x = &designs[dims.iter().position(|&q| q == p).expect("listed")];
        let s = IndexSet::new(0..k, p)?;
        let res = compatibility_constant(&gram(x)?, l, &s, &settings)?;
        let oracle = compat_random_search(x, &s, l, COMPAT_ORACLE_SAMPLES, rng);
        let mut r = RepRecord::labelled(i, format!("p={p} |S|={k} L={l}"));
        r.value("p", p as f64).value("support", k as f64).value("L", l);
        r.value("value", res.value).value("oracle", oracle);
        r.value("relative_diff", (res.value - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));
        r.flag("certified", res.certified);
        Ok(r)
    })?;

    let analytic = [
        ("identity", Matrix::identity(4, 4), vec![0, 1], 1.0, 1.0),
        ("rho=0.5 L=2", Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]), vec![0], 2.0, 0.75),
        ("rho=0.9 L=0.5", Matrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]), vec![0], 0.5, 0.35),
    ];
    for (label, sigma, s, l, want) in analytic {
        let p = sigma.nrows();
        let res = compatibility_constant(&crate::linalg::GramMatrix::from_matrix(sigma)?, l, &IndexSet::new(s, p)?, &settings)?;
        let mut r = RepRecord::labelled(records.len(), format!("analytic {label}"));
        r.value("value", res.value).value("expected", want).value("analytic_error", (res.value - want).abs());
        r.flag("certified", res.certified);
        records.push(r);
    }
    let checks = vec![
        max_check("oracle-agreement", &records, "relative_diff", 1e-3),
        max_check("analytic", &records, "analytic_error", 1e-6),
        all_true("certified", &records, "certified"),
    ];
    Ok((records, checks))
}

fn bound_key(t: TheoremId, delta: Option<f64>) -> String {
    match delta {
        Some(d) => format!("{}[delta={d}]", t.name()),
        None => t.name().to_owned(),
    }
}

fn record_bound(r: &mut RepRecord, key: &str, rep: &crate::compat::BoundReport) {
    r.flag(&format!("{key}.applicable"), rep.applicable);
    if rep.applicable {
        r.value(&format!("{key}.lhs"), rep.lhs).value(&format!("{key}.rhs"), rep.rhs);
        r.flag(&format!("{key}.holds"), rep.holds);
    }
}

fn bound_inputs<'a>(d: &'a Dataset, beta_hat: &'a Vector, lambda: f64, lambda_eps: f64, delta: f64) -> BoundInputs<'a> {
    BoundInputs {
        data: &d.data,
        beta0: &d.beta0,
        eps: &d.eps,
        beta_hat,
        candidate: &d.beta0,
        lambda,
        lambda_eps,
        delta,
        theta0: None,
        sigma0: None,
        support_cap: 0,
        compat: CompatSettings::default(),
        early_exit: true,
    }
}

fn theorem_grid(cfg: &ExperimentConfig, plain: &[TheoremId], with_delta: &[TheoremId]) -> Vec<(TheoremId, Option<f64>)> {
    let mut grid: Vec<(TheoremId, Option<f64>)> = plain.iter().map(|&t| (t, None)).collect();
    for &t in with_delta {
        grid.extend(cfg.delta.iter().map(|&d| (t, Some(d))));
    }
    grid
}

fn holds_checks(records: &[RepRecord], grid: &[(TheoremId, Option<f64>)]) -> Vec<Check> {
    grid.iter()
        .map(|&(t, d)| {
            let key = bound_key(t, d);
            all_true(&key, records, &format!("{key}.holds"))
        })
        .collect()
}

fn qualifying_check(records: &[RepRecord], key: &str) -> Check {
    let (n, t) = flag_count(records, &format!("{key}.applicable"));
    let frac = if n == 0 { None } else { Some(t as f64 / n as f64) };
    Check { name: format!("{key}.qualifying-fraction"), pass: true, observed: frac, limit: None, detail: format!("{t}/{n}") }
}

fn oracle_inequality_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = theorem_grid(cfg, &[TheoremId::LassoPrediction], &[TheoremId::LassoEll1]);
    let records = per_rep(cfg.seed(), cfg.reps, |rep, rng| {
        let d = generate_dataset(cfg, rng)?;
        let le = lambda_max_noise(d.data.x(), &d.eps)?;
        let lambda = cfg.lambda_factor * le;
        let fit = solve_lasso(&d.data, lambda)?;
        let mut r = RepRecord::new(rep);
        r.value("lambda_eps", le).value("lambda", lambda);
        r.value("kkt", kkt_certificate(&d.data, &fit, lambda)?);
        for &(t, delta) in &grid {
            let rep_ = evaluate_bound(t, &bound_inputs(&d, fit.beta(), lambda, le, delta.unwrap_or(0.0)))?;
            record_bound(&mut r, &bound_key(t, delta), &rep_);
        }
        Ok(r)
    })?;
    let mut checks = holds_checks(&records, &grid);
    checks.extend(grid.iter().map(|&(t, d)| qualifying_check(&records, &bound_key(t, d))));
    checks.push(max_check("kkt", &records, "kkt", KKT_TOL));
    Ok((records, checks))
}

fn sqrt_oracle_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = theorem_grid(cfg, &[TheoremId::SqrtPredictionProp, TheoremId::SqrtPredictionThm], &[TheoremId::SqrtEll1Thm]);
    let records = per_rep(cfg.seed(), cfg.reps, |rep, rng| {
        let d = generate_dataset(cfg, rng)?;
        let eps_n = norm_n(d.eps.as_slice())?;
        let lambda0 = lambda_max_noise(d.data.x(), &d.eps)? / eps_n;
        let lambda = cfg.lambda_factor * lambda0 / ETA;
        let fit = solve_sqrt_lasso(&d.data, lambda)?;
        let mut r = RepRecord::new(rep);
        r.value("lambda0", lambda0).value("lambda", lambda);
        r.value("kkt", kkt_certificate(&d.data, fit.base(), fit.base().lambda_eff())?);
        for &(t, delta) in &grid {
            let rep_ = evaluate_bound(t, &bound_inputs(&d, fit.beta(), lambda, lambda0, delta.unwrap_or(0.0)))?;
            if let Some(&cap) = rep_.inputs.get("beta0_l1_cap") {
                r.value("beta0_l1_cap", cap);
            }
            record_bound(&mut r, &bound_key(t, delta), &rep_);
        }
        Ok(r)
    })?;
    let mut checks = holds_checks(&records, &grid);
    checks.extend(grid.iter().map(|&(t, d)| qualifying_check(&records, &bound_key(t, d))));
    checks.push(max_check("kkt", &records, "kkt", KKT_TOL));
    Ok((records, checks))
}

fn exceedance_record(rep: usize, label: String, e: &Exceedance) -> RepRecord {
    let mut r = RepRecord::labelled(rep, label);
    r.value("a", e.a).value("threshold", e.threshold).value("frequency", e.frequency);
    r.value("target", e.target).value("slack", e.slack).value("excess", e.frequency - e.target - e.slack);
    r.flag("pass", e.pass);
    r
}

fn hoeffding_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let c = vec![1.0; cfg.n];
    let tails = hoeffding_monte_carlo(&c, &cfg.a, cfg.reps, cfg.seed())?;
    let records: Vec<RepRecord> = tails.iter().enumerate().map(|(i, e)| exceedance_record(i, format!("a={}", e.a), e)).collect();
    let checks = vec![max_check("exceedance", &records, "excess", 0.0)];
    Ok((records, checks))
}

fn max_averages_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut records = Vec::new();
    for (k, p) in dims(cfg).into_iter().enumerate() {
        let m = max_averages_monte_carlo(cfg.n, p, &cfg.a, cfg.reps, substream(cfg.seed(), k as u64))?;
        let mut r = RepRecord::labelled(records.len(), format!("p={p} mean"));
        r.value("p", p as f64).value("mean", m.mean).value("bound", m.bound).value("mean_excess", m.mean - m.bound);
        records.push(r);
        for e in &m.tails {
            let mut r = exceedance_record(records.len(), format!("p={p} a={}", e.a), e);
            r.value("p", p as f64);
            records.push(r);
        }
    }
    let checks = vec![max_check("mean", &records, "mean_excess", 0.0), max_check("tails", &records, "excess", 0.0)];
    Ok((records, checks))
}

fn chaining_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (n, m, depth) = (cfg.n, cfg.points, cfg.depth);
    let seed = cfg.seed();
    let pts = unit_ball_points(n, m, &mut rep_rng(seed, 0));
    let tree = build_covering_chain(&distance_matrix_n(&pts), 0, depth, n)?;
    let mc = monte_carlo_sup(&tree, &RademacherProcess { points: pts }, cfg.reps, &cfg.a, substream(seed, 1))?;
    let mut records = Vec::new();
    let mut r = RepRecord::labelled(0, "expectation");
    r.value("mean_sup", mc.mean_sup).value("stderr", mc.stderr).value("expectation_bound", mc.expectation_bound);
    r.value("mean_excess", mc.mean_sup - mc.expectation_bound);
    records.push(r);
    for e in &mc.tails {
        records.push(exceedance_record(records.len(), format!("deviation a={}", e.a), e));
    }
    let trees = per_rep(substream(seed, 2), cfg.trees, |t, rng| {
        let pts = unit_ball_points(n, m, rng);
        let tree = build_covering_chain(&distance_matrix_n(&pts), 0, depth, n)?;
        cfg.a.iter().map(|&a| deviation_remark(&tree, a).map(|c| (t, c))).collect::<Result<Vec<_>>>()
    })?;
    for (t, c) in trees.into_iter().flatten() {
        let mut r = RepRecord::labelled(records.len(), format!("remark tree={t} a={}", c.a));
        r.value("a", c.a).value("remark_lhs", c.lhs).value("remark_rhs", c.rhs).value("remark_excess", c.lhs - c.rhs);
        r.flag("remark_holds", c.holds);
        records.push(r);
    }
    let checks = vec![
        max_check("expectation", &records, "mean_excess", 0.0),
        max_check("deviation", &records, "excess", 0.0),
        all_true("remark", &records, "remark_holds"),
    ];
    Ok((records, checks))
}

/// Dimension of the exact-inverse part of the de-sparsified protocol when
/// `grid_p` is empty.
pub const EXACT_REGIME_P: usize = 20;
const EXACT_REGIME_REPS: usize = 10;

fn desparsified_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (n, p) = (cfg.n, cfg.p);
    let seed = cfg.seed();
    let p_exact = cfg.grid_p.first().copied().unwrap_or(EXACT_REGIME_P);
    if p_exact >= n {
        return Err(Error::domain(format!("the exact-inverse regime needs p < n, got p = {p_exact}, n = {n}")));
    }
    let exact_cfg = ExperimentConfig { p: p_exact, s0: cfg.s0.min(p_exact), ..cfg.clone() };
    let lam_exact = cfg.lambda.unwrap_or((2.0 * (p_exact as f64).ln() / n as f64).sqrt());
    let mut records = per_rep(substream(seed, 1), cfg.reps.min(EXACT_REGIME_REPS), |rep, rng| {
        let d = generate_dataset(&exact_cfg, rng)?;
        let (fit, _) = initial_estimate(&d.data, lam_exact, cfg.scale_source)?;
        let node = nodewise_sqrt_lasso(d.data.x(), 0.0)?;
        let b_hat = desparsify(&d.data, &fit, &node)?;
        let x = d.data.x();
        let ols = nalgebra::Cholesky::new(x.tr_mul(x)).ok_or(Error::Singular(f64::INFINITY))?.solve(&x.tr_mul(d.data.y()));
        let mut r = RepRecord::labelled(rep, "exact-inverse");
        r.value("ols_diff", (b_hat - ols).amax());
        Ok(r)
    })?;

    let lam = cfg.lambda.unwrap_or((2.0 * (p as f64).ln() / n as f64).sqrt());
    let lam_low = cfg.lambda_low_or_default(n, p);
    let offset = records.len();
    let main = per_rep(seed, cfg.reps, |rep, rng| {
        let d = generate_dataset(cfg, rng)?;
        let (fit, sigma_hat) = initial_estimate(&d.data, lam, cfg.scale_source)?;
        let node = nodewise_sqrt_lasso(d.data.x(), lam_low)?;
        let b_hat = desparsify(&d.data, &fit, &node)?;
        let ci = confidence_intervals(&b_hat, &node, sigma_hat, n, cfg.level)?;
        let lin = sqnorm_linearity_check(&d.data, &d.beta0, &d.eps, &fit, &node)?;
        let mut r = RepRecord::labelled(offset + rep, "nodewise");
        r.vector("covered", ci.covers(d.beta0.as_slice()).into_iter().map(|c| c as u8 as f64).collect());
        r.value("sigma_used", sigma_hat);
        r.value("norm_defect", lin.max_norm_defect()).value("max_rem", lin.max_rem()).value("rem_bound", lin.bound);
        r.value("rem_excess", lin.max_rem() - lin.bound);
        r.flag("linearity_ok", !lin.violation);
        r.value("kkt_lasso", kkt_certificate(&d.data, &fit, fit.lambda_eff())?);
        r.value("kkt_nodewise", node.kkt.iter().copied().fold(0.0, f64::max));
        Ok(r)
    })?;
    records.extend(main);

    let coverage = coordinate_coverage(&records, "covered");
    let min_cov = coverage.iter().copied().reduce(f64::min);
    let max_cov = coverage.iter().copied().reduce(f64::max);
    let checks = vec![
        max_check("exact-inverse", &records, "ols_diff", 1e-8),
        max_check("norm", &records, "norm_defect", 1e-8),
        max_check("remainder", &records, "rem_excess", 1e-10),
        all_true("linearity", &records, "linearity_ok"),
        Check::at_least("coverage-min", min_cov, 0.90),
        Check::at_most("coverage-max", max_cov, 0.99),
        max_check("kkt-lasso", &records, "kkt_lasso", KKT_TOL),
        max_check("kkt-nodewise", &records, "kkt_nodewise", KKT_TOL),
    ];
    Ok((records, checks))
}

/// Per-coordinate mean of an indicator vector over the records carrying it.
pub fn coordinate_coverage(records: &[RepRecord], key: &str) -> Vec<f64> {
    super::report::aggregate(records).and_then(|a| a.vector_means.get(key).cloned()).unwrap_or_default()
}

fn precision_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (n, p) = (cfg.n, cfg.p);
    let seed = cfg.seed();
    let mut records = Vec::new();

    let d = generate_dataset(cfg, &mut rep_rng(substream(seed, 1), 0))?;
    let s_hat = d.data.gram();
    let inv = invert_symmetric(s_hat.as_matrix())?;
    let g0 = graphical_lasso(&s_hat, 0.0)?;
    let mut r = RepRecord::labelled(0, "graphical lambda=0");
    r.value("recovery_error", (&g0.theta_raw - &inv).amax()).value("kkt_graphical", g0.kkt_residual);
    records.push(r);
    let s = s_hat.as_matrix();
    let off = (0..p).flat_map(|j| (0..p).filter(move |&k| k != j).map(move |k| (j, k))).map(|(j, k)| s[(j, k)].abs()).fold(0.0, f64::max);
    let gd = graphical_lasso(&s_hat, off)?;
    let diag = Matrix::from_fn(p, p, |j, k| if j == k { 1.0 / s[(j, j)] } else { 0.0 });
    let mut r = RepRecord::labelled(1, "graphical lambda=max off-diagonal");
    r.value("recovery_error", (&gd.theta_raw - diag).amax()).value("kkt_graphical", gd.kkt_residual);
    records.push(r);

    let lam_low = cfg.lambda_low_or_default(n, p);
    let lam_g = cfg.lambda.unwrap_or_else(|| crate::inference::default_nodewise_lambda(n, p));
    let offset = records.len();
    let main = per_rep(seed, cfg.reps, |rep, rng| {
        let d = generate_dataset(cfg, rng)?;
        let s_hat = d.data.gram();
        let t0 = Some(&d.theta0);
        let mut r = RepRecord::labelled(offset + rep, "decompositions");
        let node = nodewise_sqrt_lasso(d.data.x(), lam_low)?;
        let nw = nodewise_estimate(&node, &s_hat, t0)?;
        r.value("kkt_nodewise", node.kkt.iter().copied().fold(0.0, f64::max));
        r.value("nodewise_asymmetry", (&nw.theta_desparsified - nw.theta_desparsified.transpose()).amax());
        let g = graphical_lasso(&s_hat, lam_g)?;
        r.value("kkt_graphical", g.kkt_residual);
        let gl = desparsified_graphical(&g.theta_raw, &s_hat, t0, lam_g)?;
        let sp = precision_smallp(&s_hat, t0)?;
        for (name, est) in [("nodewise", &nw), ("graphical", &gl), ("smallp", &sp)] {
            let dec = est.decomposition.as_ref().ok_or_else(|| Error::domain("decomposition missing"))?;
            r.flag(&format!("{name}.rem1_holds"), dec.rem1_holds());
            r.flag(&format!("{name}.rem2_holds"), dec.rem2_holds());
            r.value(&format!("{name}.identity_defect"), dec.identity_defect);
        }
        Ok(r)
    })?;
    records.extend(main);

    let mut checks = vec![max_check("graphical-recovery", &records, "recovery_error", 1e-6)];
    for name in ["nodewise", "graphical", "smallp"] {
        checks.push(all_true(&format!("{name}-rem1"), &records, &format!("{name}.rem1_holds")));
        checks.push(all_true(&format!("{name}-rem2"), &records, &format!("{name}.rem2_holds")));
        checks.push(max_check(&format!("{name}-identity"), &records, &format!("{name}.identity_defect"), 1e-10));
    }
    checks.push(max_check("nodewise-symmetry", &records, "nodewise_asymmetry", 1e-12));
    checks.push(max_check("kkt-nodewise", &records, "kkt_nodewise", KKT_TOL));
    checks.push(max_check("kkt-graphical", &records, "kkt_graphical", KKT_TOL));
    Ok((records, checks))
}

/// Runs the oracle-inequality and chaining protocols twice each and compares
/// the serialized outcomes byte for byte.
fn determinism_protocol(cfg: &ExperimentConfig) -> Result<Outcome> {
    let inner = [
        ExperimentConfig { protocol: Protocol::OracleInequality, ..cfg.clone() },
        ExperimentConfig { protocol: Protocol::Chaining, trees: 10, reps: cfg.reps.min(1000), ..cfg.clone() },
    ];
    let mut records = Vec::new();
    for c in inner {
        let first = serde_json::to_vec(&run_protocol(&c)?)?;
        let second = serde_json::to_vec(&run_protocol(&c)?)?;
        let mut r = RepRecord::labelled(records.len(), c.protocol.name());
        r.value("bytes", first.len() as f64).flag("identical", first == second);
        records.push(r);
    }
    let checks = vec![all_true("byte-identical", &records, "identical")];
    Ok((records, checks))
}
