use std::path::Path;
use std::process::{Command, Output};

fn lassokit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lassokit")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn presets_cover_every_criterion() {
    let out = lassokit(&["presets"]);
    assert!(out.status.success());
    let names = String::from_utf8(out.stdout).unwrap();
    assert_eq!(names.lines().count(), 15);
    assert!(names.lines().any(|l| l == "oracle-inequality"));
}

#[test]
fn preset_writes_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let out = lassokit(&["simulate", "--preset", "criterion-1", "--output", path(&file), "--records-csv", path(&csv)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(r["pass"], true);
    assert_eq!(r["config"]["protocol"], "soft-threshold");
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("rep,"));
}

#[test]
fn reruns_are_byte_identical() {
    let args = ["simulate", "--protocol", "oracle-inequality", "--seed", "11", "--reps", "20"];
    let (a, b) = (lassokit(&args), lassokit(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn fits_a_csv_with_a_named_response() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let mut text = String::from("y,x1,x2,x3\n");
    for i in 0..12 {
        let x = [(i % 3) as f64, (i % 4) as f64 - 1.5, ((i * 7) % 5) as f64];
        text.push_str(&format!("{},{},{},{}\n", 2.0 * x[0] - x[2] + 0.1 * (i % 2) as f64, x[0], x[1], x[2]));
    }
    std::fs::write(&csv, text).unwrap();
    for estimator in ["lasso", "sqrt-lasso", "scaled-lasso"] {
        let out = lassokit(&["fit", "--input", path(&csv), "--header", "--response", "y", "--estimator", estimator, "--lambda", "0.1"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let r = report(&out);
        assert!(r["records"][0]["values"]["kkt"].as_f64().unwrap() <= 1e-6);
        assert_eq!(r["records"][0]["vectors"]["beta_hat"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"n": 30, "p": 20, "seed": 4, "protocol": "normal-equations", "reps": 3}"#).unwrap();
    let out = lassokit(&["simulate", "--config", path(&cfg), "--p", "25"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["config"]["n"], 30);
    assert_eq!(r["config"]["p"], 25);
    assert_eq!(r["records"].as_array().unwrap().len(), 3);
}

#[test]
fn failed_check_exits_with_one() {
    // Five reps cannot put every coordinate's coverage inside the band.
    let out = lassokit(&["simulate", "--protocol", "desparsified", "--seed", "1", "--reps", "5"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["pass"], false);
    assert!(String::from_utf8_lossy(&out.stderr).contains("coverage"));
}

#[test]
fn usage_and_input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"n": 30, "bogus": 1}"#).unwrap();
    let missing = dir.path().join("missing.csv");
    for args in [
        vec!["simulate"],
        vec!["simulate", "--seed", "1", "--rho", "1.5"],
        vec!["simulate", "--seed", "1", "--protocol", "nonsense"],
        vec!["simulate", "--unknown-flag"],
        vec!["simulate", "--preset", "criterion-1", "--config", path(&cfg)],
        vec!["simulate", "--config", path(&cfg)],
        vec!["fit", "--input", path(&missing)],
    ] {
        let out = lassokit(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn zero_reps_is_an_empty_passing_report() {
    let out = lassokit(&["simulate", "--seed", "1", "--reps", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["records"].as_array().unwrap().len(), 0);
    assert!(r["aggregates"].is_null());
}
