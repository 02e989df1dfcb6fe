use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ScaleSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Fit,
    Nodewise,
    Desparsify,
    Compat,
    Chain,
    #[default]
    Simulate,
}

/// Estimator used by `fit` mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    #[default]
    Lasso,
    SqrtLasso,
    ScaledLasso,
}

/// Simulation protocols; each one verifies one acceptance criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    SoftThreshold,
    Kkt,
    NormalEquations,
    FixedPoint,
    EqualCorrelation,
    Compatibility,
    #[default]
    OracleInequality,
    SqrtOracleInequality,
    Hoeffding,
    MaxAverages,
    Chaining,
    Desparsified,
    Precision,
    Determinism,
}

impl Protocol {
    pub const ALL: [Protocol; 14] = [
        Protocol::SoftThreshold,
        Protocol::Kkt,
        Protocol::NormalEquations,
        Protocol::FixedPoint,
        Protocol::EqualCorrelation,
        Protocol::Compatibility,
        Protocol::OracleInequality,
        Protocol::SqrtOracleInequality,
        Protocol::Hoeffding,
        Protocol::MaxAverages,
        Protocol::Chaining,
        Protocol::Desparsified,
        Protocol::Precision,
        Protocol::Determinism,
    ];

    /// Acceptance criterion number, 1 to 14.
    pub fn criterion(self) -> usize {
        Protocol::ALL.iter().position(|&p| p == self).expect("listed") + 1
    }

    pub fn from_criterion(k: usize) -> Option<Protocol> {
        k.checked_sub(1).and_then(|i| Protocol::ALL.get(i).copied())
    }

    pub fn name(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).expect("unit variant")
    }
}

/// Full description of one run. Every field has a default, so JSON configs
/// may list only what they override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub protocol: Protocol,
    pub n: usize,
    pub p: usize,
    pub s0: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Magnitude of the nonzero entries of `β⁰`.
    pub signal: f64,
    /// Penalty level; `None` selects the mode's default.
    pub lambda: Option<f64>,
    /// Node-wise level `λ̲`; `None` selects `√(log p/n)`.
    pub lambda_low: Option<f64>,
    /// `λ = factor·λ_ε` in the Lasso protocols, `λη = factor·λ₀` in the
    /// square-root ones.
    pub lambda_factor: f64,
    pub delta: Vec<f64>,
    pub a: Vec<f64>,
    pub level: f64,
    pub reps: usize,
    pub seed: Option<u64>,
    /// Dimension grid of protocols that sweep `p`.
    pub grid_p: Vec<usize>,
    pub grid_rho: Vec<f64>,
    pub compat_l: Vec<f64>,
    /// Point count and depth of chaining trees.
    pub points: usize,
    pub depth: usize,
    pub trees: usize,
    pub estimator: Estimator,
    pub scale_source: ScaleSource,
    pub input: Option<PathBuf>,
    pub header: bool,
    pub response: Option<String>,
    pub output: Option<PathBuf>,
    /// Adds wall-clock time to the report, which then stops being reproducible.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Simulate,
            protocol: Protocol::OracleInequality,
            n: 50,
            p: 100,
            s0: 3,
            rho: 0.0,
            sigma: 1.0,
            signal: 1.0,
            lambda: None,
            lambda_low: None,
            lambda_factor: 2.0,
            delta: vec![0.1, 0.5],
            a: vec![1.0, 2.0, 3.0],
            level: 0.95,
            reps: 100,
            seed: None,
            grid_p: Vec::new(),
            grid_rho: Vec::new(),
            compat_l: vec![0.5, 1.0, 3.0],
            points: 32,
            depth: 5,
            trees: 100,
            estimator: Estimator::Lasso,
            scale_source: ScaleSource::default(),
            input: None,
            header: false,
            response: None,
            output: None,
            record_timing: false,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    /// Preset for one acceptance criterion.
    pub fn preset(protocol: Protocol) -> Self {
        let base = Self {
            mode: Mode::Simulate,
            protocol,
            seed: Some(1000 + protocol.criterion() as u64),
            ..Self::default()
        };
        match protocol {
            Protocol::SoftThreshold => Self { n: 8, p: 8, grid_p: vec![8, 64], reps: 100, ..base },
            Protocol::Kkt => Self { rho: 0.3, reps: 20, ..base },
            Protocol::NormalEquations => Self { reps: 100, ..base },
            Protocol::FixedPoint => Self { n: 60, p: 40, reps: 10, ..base },
            Protocol::EqualCorrelation => Self { grid_p: vec![2, 5, 50], grid_rho: vec![0.0, 0.3, 0.9], reps: 1, ..base },
            Protocol::Compatibility => Self { n: 20, grid_p: vec![2, 3, 4, 5, 6], reps: 1, ..base },
            Protocol::OracleInequality => Self { reps: 1000, ..base },
            Protocol::SqrtOracleInequality => Self { reps: 1000, signal: 0.05, lambda_factor: 3.0, ..base },
            Protocol::Hoeffding => Self { n: 50, reps: 100_000, ..base },
            Protocol::MaxAverages => Self { n: 100, grid_p: vec![10, 100], a: vec![1.0, 2.0], reps: 10_000, ..base },
            Protocol::Chaining => Self { n: 50, points: 32, depth: 5, trees: 100, reps: 10_000, ..base },
            Protocol::Desparsified => Self { n: 100, p: 150, grid_p: vec![20], reps: 500, ..base },
            Protocol::Precision => Self { n: 100, p: 10, rho: 0.3, reps: 50, ..base },
            Protocol::Determinism => Self { reps: 50, ..base },
        }
    }

    /// Looks up a preset by protocol name or by `criterion-<k>`.
    pub fn preset_named(name: &str) -> Result<Self> {
        if name == "sqrt-oracle-inequality-strict" {
            return Ok(Self { signal: 1.0, ..Self::preset(Protocol::SqrtOracleInequality) });
        }
        let by_number = name.strip_prefix("criterion-").and_then(|k| k.parse().ok()).and_then(Protocol::from_criterion);
        by_number
            .or_else(|| Protocol::ALL.into_iter().find(|p| p.name() == name))
            .map(Self::preset)
            .ok_or_else(|| Error::domain(format!("unknown preset {name:?}")))
    }

    pub fn preset_names() -> Vec<String> {
        let mut names: Vec<String> = Protocol::ALL.iter().map(|p| p.name()).collect();
        names.push("sqrt-oracle-inequality-strict".into());
        names
    }

    /// Checks ranges; a seed is required whenever data or draws are random.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::domain("n and p must be positive"));
        }
        if self.s0 > self.p {
            return Err(Error::domain(format!("s₀ = {} exceeds p = {}", self.s0, self.p)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::domain(format!("ρ must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::domain(format!("σ must be nonnegative, got {}", self.sigma)));
        }
        if !self.signal.is_finite() {
            return Err(Error::domain("signal must be finite"));
        }
        if let Some(l) = self.lambda {
            positive("λ", l)?;
        }
        if let Some(l) = self.lambda_low {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::domain(format!("λ̲ must be nonnegative, got {l}")));
            }
        }
        positive("lambda_factor", self.lambda_factor)?;
        if let Some(d) = self.delta.iter().find(|d| !(0.0..1.0).contains(*d)) {
            return Err(Error::domain(format!("δ must lie in [0, 1), got {d}")));
        }
        for &a in &self.a {
            positive("a", a)?;
        }
        for &l in &self.compat_l {
            positive("L", l)?;
        }
        if let Some(r) = self.grid_rho.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::domain(format!("grid ρ must lie in [0, 1), got {r}")));
        }
        if self.grid_p.contains(&0) {
            return Err(Error::domain("grid dimensions must be positive"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::domain(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.points == 0 || self.depth == 0 {
            return Err(Error::domain("points and depth must be positive"));
        }
        if self.response.is_some() && !self.header {
            return Err(Error::domain("a named response column needs a header row"));
        }
        let random = self.mode == Mode::Simulate || self.mode == Mode::Chain || self.input.is_none();
        if random && self.seed.is_none() {
            return Err(Error::domain(format!("{:?} mode with generated data requires a seed", self.mode)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn lambda_low_or_default(&self, n: usize, p: usize) -> f64 {
        self.lambda_low.unwrap_or_else(|| crate::inference::default_nodewise_lambda(n, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_cover_every_criterion_and_validate() {
        for (k, p) in Protocol::ALL.into_iter().enumerate() {
            assert_eq!(p.criterion(), k + 1);
            let c = ExperimentConfig::preset_named(&format!("criterion-{}", k + 1)).unwrap();
            assert_eq!(c.protocol, p);
            assert_eq!(ExperimentConfig::preset_named(&p.name()).unwrap(), c);
            c.validate().unwrap();
        }
        assert!(ExperimentConfig::preset_named("criterion-15").is_err());
        assert_eq!(ExperimentConfig::preset_named("sqrt-oracle-inequality-strict").unwrap().signal, 1.0);
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let ok = ExperimentConfig::preset(Protocol::OracleInequality);
        for bad in [
            ExperimentConfig { rho: 1.0, ..ok.clone() },
            ExperimentConfig { s0: 101, ..ok.clone() },
            ExperimentConfig { seed: None, ..ok.clone() },
            ExperimentConfig { delta: vec![1.0], ..ok.clone() },
            ExperimentConfig { level: 1.0, ..ok.clone() },
            ExperimentConfig { sigma: -1.0, ..ok.clone() },
            ExperimentConfig { response: Some("y".into()), ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn json_round_trip_and_partial_configs() {
        let c = ExperimentConfig::preset(Protocol::Chaining);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let partial = ExperimentConfig::from_json(r#"{"mode": "fit", "n": 20, "scale_source": {"known": 2.0}}"#).unwrap();
        assert_eq!(partial.mode, Mode::Fit);
        assert_eq!(partial.p, 100);
        assert_eq!(partial.scale_source, ScaleSource::Known(2.0));
        assert!(ExperimentConfig::from_json(r#"{"nn": 3}"#).is_err());
    }
}
