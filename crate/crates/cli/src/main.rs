//! `lassokit` command line: one subcommand per experiment mode.
//!
//! Settings start from the defaults, a `--preset` or a `--config` file, and
//! individual flags override them. Exit status is 0 when every embedded check
//! passes, 1 when one fails and 2 on usage, input or solver errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lassokit::harness::{report_json, run_experiment, write_records_csv, Estimator, ExperimentConfig, Mode, Protocol};
use lassokit::inference::ScaleSource;

#[derive(Parser)]
#[command(name = "lassokit", version, about = "Lasso-family estimators, inference and theory checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a Lasso, square-root Lasso or scaled Lasso.
    Fit(Common),
    /// Node-wise square-root Lasso surrogate inverse of the Gram matrix.
    Nodewise(Common),
    /// De-sparsified estimates with confidence intervals.
    Desparsify(Common),
    /// Compatibility constants of the design.
    Compat(Common),
    /// Generic chaining bounds on random trees.
    Chain(Common),
    /// Run a seeded simulation protocol.
    Simulate(Common),
    /// List the named presets.
    Presets,
}

#[derive(Args)]
struct Common {
    /// JSON config; flags given on the command line override it.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset (`criterion-<k>` or a protocol name) applied first.
    #[arg(long)]
    preset: Option<String>,
    /// Simulation protocol, by name or criterion number.
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    s0: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    signal: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_low: Option<f64>,
    #[arg(long)]
    lambda_factor: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    a: Option<Vec<f64>>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    compat_l: Option<Vec<f64>>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    /// lasso, sqrt-lasso or scaled-lasso.
    #[arg(long)]
    estimator: Option<String>,
    /// scaled, square-root, scaled-residual or known=<σ>.
    #[arg(long)]
    scale_source: Option<String>,
    /// Design CSV, response in the last column unless `--response` names it.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    response: Option<String>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also flatten the per-rep values into a CSV table.
    #[arg(long)]
    records_csv: Option<PathBuf>,
    #[arg(long)]
    record_timing: bool,
}

fn kebab<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|_| format!("unknown {what} {s:?}"))
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    match s.parse::<usize>() {
        Ok(k) => Protocol::from_criterion(k).ok_or_else(|| format!("no criterion {k}")),
        Err(_) => kebab("protocol", s),
    }
}

fn parse_scale_source(s: &str) -> Result<ScaleSource, String> {
    match s.strip_prefix("known=") {
        Some(v) => v.parse().map(ScaleSource::Known).map_err(|_| format!("bad scale {v:?}")),
        None => kebab("scale source", s),
    }
}

fn build_config(mode: Mode, c: &Common) -> Result<ExperimentConfig, String> {
    let mut cfg = match &c.preset {
        Some(name) => ExperimentConfig::preset_named(name).map_err(|e| e.to_string())?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &c.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg = ExperimentConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    cfg.mode = mode;
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = &c.$field { cfg.$field = v.clone(); } )* };
    }
    set!(n, p, s0, rho, sigma, signal, lambda_factor, delta, a, level, reps, compat_l, points, depth, trees);
    if c.lambda.is_some() {
        cfg.lambda = c.lambda;
    }
    if c.lambda_low.is_some() {
        cfg.lambda_low = c.lambda_low;
    }
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if let Some(p) = &c.protocol {
        cfg.protocol = parse_protocol(p)?;
    }
    if let Some(e) = &c.estimator {
        cfg.estimator = kebab::<Estimator>("estimator", e)?;
    }
    if let Some(s) = &c.scale_source {
        cfg.scale_source = parse_scale_source(s)?;
    }
    if c.input.is_some() {
        cfg.input = c.input.clone();
    }
    if let Some(path) = cfg.input.as_ref().filter(|p| !p.is_file()) {
        return Err(format!("{}: no such file", path.display()));
    }
    if c.output.is_some() {
        cfg.output = c.output.clone();
    }
    if c.response.is_some() {
        cfg.response = c.response.clone();
    }
    cfg.header |= c.header;
    cfg.record_timing |= c.record_timing;
    Ok(cfg)
}

fn run(mode: Mode, c: &Common) -> Result<bool, String> {
    let cfg = build_config(mode, c)?;
    let report = run_experiment(&cfg).map_err(|e| e.to_string())?;
    if cfg.output.is_none() {
        print!("{}", report_json(&report).map_err(|e| e.to_string())?);
    }
    if let Some(path) = &c.records_csv {
        write_records_csv(&report, path).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    for check in report.failed_checks() {
        eprintln!("check failed: {} (observed {:?}, limit {:?}) {}", check.name, check.observed, check.limit, check.detail);
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match &cli.command {
        Command::Fit(c) => (Mode::Fit, c),
        Command::Nodewise(c) => (Mode::Nodewise, c),
        Command::Desparsify(c) => (Mode::Desparsify, c),
        Command::Compat(c) => (Mode::Compat, c),
        Command::Chain(c) => (Mode::Chain, c),
        Command::Simulate(c) => (Mode::Simulate, c),
        Command::Presets => {
            for name in ExperimentConfig::preset_names() {
                println!("{name}");
            }
            return ExitCode::SUCCESS;
        }
    };
    match run(mode, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
