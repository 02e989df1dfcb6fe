//! Data generation, experiment orchestration and file I/O.
//!
//! A run is fully described by an [`ExperimentConfig`]; its outcome is a
//! [`Report`] whose embedded checks decide the exit status. Replication `r`
//! of a run with seed `s` draws from stream `r` of a ChaCha8 generator keyed
//! by `s`, so results do not depend on scheduling. Reports carry no timing
//! unless asked to, which keeps them byte-identical across runs.

mod config;
mod data;
mod io;
mod oracles;
mod protocols;
mod report;

pub use config::{Estimator, ExperimentConfig, Mode, Protocol};
pub use data::{equal_correlation_design, generate_dataset, sparse_beta, Dataset};
pub use io::{load_csv, read_table, report_json, write_design_csv, write_matrix_csv, write_records_csv, write_report, CsvOptions};
pub use oracles::{compat_random_search, sqrt_lasso_sigma_grid, SigmaGridOracle};
pub use protocols::{
    coordinate_coverage, default_lasso_lambda, default_scale_free_lambda, COMPAT_ORACLE_SAMPLES, EXACT_REGIME_P, KKT_TOL,
};
pub use report::{aggregate, flag_count, max_value, Aggregates, Check, RepRecord, Report, REPORT_FORMAT_VERSION};

use std::time::Instant;

use crate::chaining::rep_rng;
use crate::compat::compatibility_constant;
use crate::error::{Error, Result};
use crate::inference::{confidence_intervals, desparsify, initial_estimate, nodewise_sqrt_lasso, sqnorm_linearity_check};
use crate::linalg::{l1_norm, norm_n, DesignData, IndexSet};
use crate::solvers::{kkt_certificate, solve_lasso, solve_scaled_lasso, solve_sqrt_lasso};
use protocols::{run_protocol, Outcome};

/// Runs the configured mode and writes the report to `config.output` when set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let start = Instant::now();
    let (records, checks) = match config.mode {
        Mode::Simulate if config.reps == 0 => (Vec::new(), Vec::new()),
        Mode::Simulate => run_protocol(config)?,
        Mode::Chain => run_protocol(&ExperimentConfig { protocol: Protocol::Chaining, ..config.clone() })?,
        Mode::Fit => fit_mode(config)?,
        Mode::Nodewise => nodewise_mode(config)?,
        Mode::Desparsify => desparsify_mode(config)?,
        Mode::Compat => compat_mode(config)?,
    };
    let mut report = Report::new(config.clone(), records, checks);
    if config.record_timing {
        report.elapsed_seconds = Some(start.elapsed().as_secs_f64());
    }
    if let Some(path) = &config.output {
        write_report(&report, path)?;
    }
    Ok(report)
}

/// The input CSV when given, otherwise replication 0 of the simulation model.
fn mode_data(cfg: &ExperimentConfig) -> Result<(DesignData, Option<Dataset>)> {
    match &cfg.input {
        Some(path) => {
            let options = CsvOptions { header: cfg.header, response: cfg.response.clone() };
            Ok((load_csv(path, &options)?, None))
        }
        None => {
            let d = generate_dataset(cfg, &mut rep_rng(cfg.seed(), 0))?;
            Ok((d.data.clone(), Some(d)))
        }
    }
}

/// `‖Y − Ȳ‖_n`, the scale proxy for data of unknown noise level.
fn response_spread(data: &DesignData) -> Result<f64> {
    let y = data.y();
    let mean = y.mean();
    norm_n(y.map(|v| v - mean).as_slice())
}

fn truth_errors(r: &mut RepRecord, data: &DesignData, truth: &Option<Dataset>, beta: &crate::linalg::Vector) {
    if let Some(d) = truth {
        let diff = beta - &d.beta0;
        r.value("prediction_error", (data.x() * &diff).norm_squared() / data.n() as f64);
        r.value("l1_error", l1_norm(diff.as_slice()));
    }
}

fn fit_mode(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (data, truth) = mode_data(cfg)?;
    let (n, p) = (data.n(), data.p());
    let mut r = RepRecord::labelled(0, format!("{:?}", cfg.estimator));
    let (base, lambda) = match cfg.estimator {
        crate::harness::Estimator::Lasso => {
            let proxy = if truth.is_some() { cfg.sigma } else { response_spread(&data)? };
            let lambda = cfg.lambda.map_or_else(|| default_lasso_lambda(n, p, proxy), Ok)?;
            (solve_lasso(&data, lambda)?, lambda)
        }
        est => {
            let lambda = cfg.lambda.map_or_else(|| default_scale_free_lambda(n, p), Ok)?;
            let fit = if est == Estimator::SqrtLasso { solve_sqrt_lasso(&data, lambda)? } else { solve_scaled_lasso(&data, lambda)? };
            r.value("sigma_hat", fit.sigma_hat()).value("sigma_tilde", fit.sigma_tilde());
            r.value("fixed_point_residual", fit.fixed_point_residual());
            (fit.into_base(), lambda)
        }
    };
    let kkt = kkt_certificate(&data, &base, base.lambda_eff())?;
    r.value("lambda", lambda).value("lambda_eff", base.lambda_eff()).value("kkt", kkt).value("rss", base.rss());
    r.value("iterations", base.iterations() as f64);
    r.value("nonzeros", base.beta().iter().filter(|&&b| b != 0.0).count() as f64);
    truth_errors(&mut r, &data, &truth, base.beta());
    r.vector("beta_hat", base.beta().as_slice().to_vec());
    Ok((vec![r], vec![Check::at_most("kkt", Some(kkt), KKT_TOL)]))
}

fn nodewise_mode(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (data, _) = mode_data(cfg)?;
    let lam = cfg.lambda_low_or_default(data.n(), data.p());
    let node = nodewise_sqrt_lasso(data.x(), lam)?;
    let (diag, off, var) = node.identity_defects(&data.gram());
    let kkt = node.kkt.iter().copied().fold(0.0, f64::max);
    let mut r = RepRecord::labelled(0, "nodewise");
    r.value("lambda_low", lam).value("kkt", kkt);
    r.value("diagonal_defect", diag).value("off_diagonal_excess", off).value("variance_defect", var);
    r.vector("tau_hat_sq", node.tau_hat_sq.clone()).vector("tau_tilde_sq", node.tau_tilde_sq.clone());
    r.vector("theta_column_major", node.theta.as_slice().to_vec());
    let checks = vec![
        Check::at_most("kkt", Some(kkt), KKT_TOL),
        Check::at_most("diagonal", Some(diag), 1e-8),
        Check::at_most("off-diagonal", Some(off), 1e-8),
    ];
    Ok((vec![r], checks))
}

fn desparsify_mode(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (data, truth) = mode_data(cfg)?;
    let (n, p) = (data.n(), data.p());
    let lam = cfg.lambda.unwrap_or((2.0 * (p as f64).ln() / n as f64).sqrt());
    let (fit, sigma_hat) = initial_estimate(&data, lam, cfg.scale_source)?;
    let node = nodewise_sqrt_lasso(data.x(), cfg.lambda_low_or_default(n, p))?;
    let b_hat = desparsify(&data, &fit, &node)?;
    let ci = confidence_intervals(&b_hat, &node, sigma_hat, n, cfg.level)?;
    let kkt = kkt_certificate(&data, &fit, fit.lambda_eff())?;
    let kkt_nodes = node.kkt.iter().copied().fold(0.0, f64::max);
    let mut r = RepRecord::labelled(0, "desparsified");
    r.value("lambda", lam).value("sigma_used", sigma_hat).value("z", ci.z).value("kkt_lasso", kkt).value("kkt_nodewise", kkt_nodes);
    let mut checks = vec![Check::at_most("kkt-lasso", Some(kkt), KKT_TOL), Check::at_most("kkt-nodewise", Some(kkt_nodes), KKT_TOL)];
    if let Some(d) = &truth {
        let covered = ci.covers(d.beta0.as_slice());
        r.value("coverage", covered.iter().filter(|&&c| c).count() as f64 / p as f64);
        r.vector("covered", covered.into_iter().map(|c| c as u8 as f64).collect());
        let lin = sqnorm_linearity_check(&data, &d.beta0, &d.eps, &fit, &node)?;
        r.value("norm_defect", lin.max_norm_defect()).value("max_rem", lin.max_rem()).value("rem_bound", lin.bound);
        checks.push(Check::boolean("linearity", !lin.violation));
    }
    r.vector("beta_hat", fit.beta().as_slice().to_vec());
    r.vector("b_hat", ci.b_hat.clone()).vector("se", ci.se.clone());
    r.vector("ci_lower", ci.ci_lower.clone()).vector("ci_upper", ci.ci_upper.clone());
    Ok((vec![r], checks))
}

fn compat_mode(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (data, truth) = mode_data(cfg)?;
    let p = data.p();
    let s = match &truth {
        Some(d) => IndexSet::support(&d.beta0),
        None => IndexSet::new(0..cfg.s0.min(p), p)?,
    };
    if s.is_empty() {
        return Err(Error::domain("the compatibility constant needs a nonempty S (s₀ ≥ 1)"));
    }
    let settings = crate::compat::CompatSettings { seed: cfg.seed(), ..Default::default() };
    let g = data.gram();
    let mut records = Vec::new();
    for &l in &cfg.compat_l {
        let res = compatibility_constant(&g, l, &s, &settings)?;
        let mut r = RepRecord::labelled(records.len(), format!("L={l}"));
        r.value("L", l).value("support", s.len() as f64).value("value", res.value);
        r.value("certified_lower_bound", res.lower_bound()).value("max_orthant_gap", res.max_orthant_gap);
        r.flag("certified", res.certified);
        records.push(r);
    }
    let (total, certified) = flag_count(&records, "certified");
    let checks = vec![Check::boolean("certified", certified == total).with_detail(format!("{certified}/{total}"))];
    Ok((records, checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuous_simulation() {
        let cfg = ExperimentConfig { reps: 0, seed: Some(1), ..ExperimentConfig::default() };
        let r = run_experiment(&cfg).unwrap();
        assert!(r.records.is_empty() && r.aggregates.is_none() && r.pass);
    }

    #[test]
    fn simulate_requires_a_seed() {
        assert!(run_experiment(&ExperimentConfig::default()).is_err());
    }

    #[test]
    fn small_runs_are_reproducible_and_consistent() {
        let cfg = ExperimentConfig { reps: 4, n: 30, p: 20, seed: Some(9), ..ExperimentConfig::preset(Protocol::OracleInequality) };
        let a = report_json(&run_experiment(&cfg).unwrap()).unwrap();
        let b = report_json(&run_experiment(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let r: Report = serde_json::from_str(&a).unwrap();
        assert!(r.aggregates_consistent());
        assert!(r.pass, "{:?}", r.failed_checks().collect::<Vec<_>>());
    }

    #[test]
    fn modes_run_on_generated_and_file_data() {
        let base = ExperimentConfig { n: 40, p: 12, s0: 2, seed: Some(3), reps: 50, trees: 3, ..ExperimentConfig::default() };
        for mode in [Mode::Fit, Mode::Nodewise, Mode::Desparsify, Mode::Compat, Mode::Chain] {
            let r = run_experiment(&ExperimentConfig { mode, ..base.clone() }).unwrap();
            assert!(!r.records.is_empty(), "{mode:?}");
        }
        for estimator in [Estimator::SqrtLasso, Estimator::ScaledLasso] {
            let r = run_experiment(&ExperimentConfig { mode: Mode::Fit, estimator, ..base.clone() }).unwrap();
            assert!(r.pass);
        }

        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.csv");
        let d = generate_dataset(&base, &mut rep_rng(3, 0)).unwrap();
        write_design_csv(&d.data, &input).unwrap();
        let output = dir.path().join("r.json");
        let cfg = ExperimentConfig { mode: Mode::Fit, input: Some(input), seed: None, output: Some(output.clone()), ..base };
        let r = run_experiment(&cfg).unwrap();
        assert!(r.pass);
        let back: Report = serde_json::from_str(&std::fs::read_to_string(output).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn errors_carry_the_replication() {
        let cfg = ExperimentConfig { reps: 2, n: 10, p: 5, sigma: 0.0, seed: Some(4), ..ExperimentConfig::default() };
        match run_experiment(&cfg) {
            Err(Error::Rep { rep, seed: 4, .. }) => assert!(rep < 2),
            other => panic!("{other:?}"),
        }
    }
}
