use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Outcome of one replication (or one grid cell for grid protocols).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub flags: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl RepRecord {
    pub fn new(rep: usize) -> Self {
        Self { rep, ..Self::default() }
    }

    pub fn labelled(rep: usize, label: impl Into<String>) -> Self {
        Self { rep, label: Some(label.into()), ..Self::default() }
    }

    /// Stores a finite value; a non-finite one is recorded as the flag
    /// `<key>_finite = false` instead.
    pub fn value(&mut self, key: &str, v: f64) -> &mut Self {
        if v.is_finite() {
            self.values.insert(key.to_owned(), v);
        } else {
            self.flags.insert(format!("{key}_finite"), false);
        }
        self
    }

    pub fn flag(&mut self, key: &str, b: bool) -> &mut Self {
        self.flags.insert(key.to_owned(), b);
        self
    }

    /// Stores a vector of finite values, as 0/1 for indicators.
    pub fn vector(&mut self, key: &str, v: Vec<f64>) -> &mut Self {
        self.vectors.insert(key.to_owned(), v);
        self
    }
}

/// Summaries that are a pure function of the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub records: usize,
    /// Mean over the records that carry the key.
    pub means: BTreeMap<String, f64>,
    pub maxima: BTreeMap<String, f64>,
    /// Fraction of `true` over the records that carry the flag.
    pub frequencies: BTreeMap<String, f64>,
    /// Elementwise mean over the records whose vector has the common length.
    pub vector_means: BTreeMap<String, Vec<f64>>,
}

pub fn aggregate(records: &[RepRecord]) -> Option<Aggregates> {
    if records.is_empty() {
        return None;
    }
    let mut sums: BTreeMap<String, (f64, usize, f64)> = BTreeMap::new();
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut vsums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        for (k, &v) in &r.values {
            let e = sums.entry(k.clone()).or_insert((0.0, 0, f64::NEG_INFINITY));
            e.0 += v;
            e.1 += 1;
            e.2 = e.2.max(v);
        }
        for (k, &b) in &r.flags {
            let e = counts.entry(k.clone()).or_insert((0, 0));
            e.0 += b as usize;
            e.1 += 1;
        }
        for (k, v) in &r.vectors {
            let e = vsums.entry(k.clone()).or_insert_with(|| (vec![0.0; v.len()], 0));
            if e.0.len() == v.len() {
                e.0.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                e.1 += 1;
            }
        }
    }
    Some(Aggregates {
        records: records.len(),
        means: sums.iter().map(|(k, (s, c, _))| (k.clone(), s / *c as f64)).collect(),
        maxima: sums.iter().map(|(k, (_, _, m))| (k.clone(), *m)).collect(),
        frequencies: counts.into_iter().map(|(k, (t, c))| (k, t as f64 / c as f64)).collect(),
        vector_means: vsums.into_iter().map(|(k, (s, c))| (k, s.into_iter().map(|x| x / c as f64).collect())).collect(),
    })
}

/// One embedded assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub observed: Option<f64>,
    pub limit: Option<f64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    /// Passes when `observed ≤ limit`; an absent observation passes vacuously.
    pub fn at_most(name: &str, observed: Option<f64>, limit: f64) -> Self {
        let pass = observed.is_none_or(|o| o <= limit);
        Self { name: name.into(), pass, observed: observed.filter(|o| o.is_finite()), limit: Some(limit), detail: String::new() }
    }

    pub fn at_least(name: &str, observed: Option<f64>, limit: f64) -> Self {
        let pass = observed.is_none_or(|o| o >= limit);
        Self { name: name.into(), pass, observed: observed.filter(|o| o.is_finite()), limit: Some(limit), detail: String::new() }
    }

    pub fn boolean(name: &str, pass: bool) -> Self {
        Self { name: name.into(), pass, observed: None, limit: None, detail: String::new() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub lassokit_version: String,
    pub config: ExperimentConfig,
    pub records: Vec<RepRecord>,
    pub aggregates: Option<Aggregates>,
    pub checks: Vec<Check>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
}

impl Report {
    pub fn new(config: ExperimentConfig, records: Vec<RepRecord>, checks: Vec<Check>) -> Self {
        let aggregates = aggregate(&records);
        let pass = checks.iter().all(|c| c.pass);
        Self {
            format_version: REPORT_FORMAT_VERSION,
            lassokit_version: env!("CARGO_PKG_VERSION").to_owned(),
            config,
            records,
            aggregates,
            checks,
            pass,
            elapsed_seconds: None,
        }
    }

    /// Whether the stored aggregates equal a recomputation from the records.
    pub fn aggregates_consistent(&self) -> bool {
        aggregate(&self.records) == self.aggregates
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Largest value of `key` over the records that carry it.
pub fn max_value(records: &[RepRecord], key: &str) -> Option<f64> {
    records.iter().filter_map(|r| r.values.get(key).copied()).reduce(f64::max)
}

/// Number of records carrying `flag`, and how many of those are `true`.
pub fn flag_count(records: &[RepRecord], flag: &str) -> (usize, usize) {
    records
        .iter()
        .filter_map(|r| r.flags.get(flag))
        .fold((0, 0), |(n, t), &b| (n + 1, t + b as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregates_follow_records() {
        let mut a = RepRecord::new(0);
        a.value("x", 1.0).flag("ok", true).vector("v", vec![1.0, 0.0]).value("inf", f64::INFINITY);
        let mut b = RepRecord::new(1);
        b.value("x", 3.0).flag("ok", false).vector("v", vec![0.0, 0.0]);
        let agg = aggregate(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(agg.means["x"], 2.0);
        assert_eq!(agg.maxima["x"], 3.0);
        assert_eq!(agg.frequencies["ok"], 0.5);
        assert_eq!(agg.frequencies["inf_finite"], 0.0);
        assert_eq!(agg.vector_means["v"], vec![0.5, 0.0]);
        assert!(aggregate(&[]).is_none());

        let r = Report::new(ExperimentConfig::default(), vec![a, b], vec![Check::at_most("x", Some(3.0), 3.0)]);
        assert!(r.pass && r.aggregates_consistent());
        assert_eq!(max_value(&r.records, "x"), Some(3.0));
        assert_eq!(flag_count(&r.records, "ok"), (2, 1));
        let json = serde_json::to_string(&r).unwrap();
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn checks() {
        assert!(Check::at_most("a", None, 1.0).pass);
        assert!(!Check::at_most("a", Some(f64::INFINITY), 1.0).pass);
        assert!(Check::at_least("a", Some(2.0), 1.0).pass);
        assert!(!Check::boolean("b", false).pass);
    }
}
