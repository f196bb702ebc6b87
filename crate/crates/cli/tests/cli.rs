use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn spec(styles: &[&str]) -> Value {
    json!({
        "model": {
            "r": 0.03, "lambda_b": 0.05, "lambda_c": 0.02, "recovery_b": 0.5,
            "recovery_c": 0.4, "sigma": 0.1, "m0": 0.0, "maturity": 5.0
        },
        "grid": {"maturity": 5.0, "step": 0.5, "reset_period": 0.5},
        "sim": {"n_paths": 20000, "seed": 11},
        "styles": styles,
    })
}

fn ccr(dir: &Path, mode: &str, spec: &Value, extra: &[&str]) -> Output {
    let config = dir.join("spec.json");
    std::fs::write(&config, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_ccr"))
        .arg(mode)
        .arg("--config")
        .arg(&config)
        .args(extra)
        .output()
        .unwrap()
}

fn rows(out: &Output) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(out.stdout.as_slice()).records().map(|r| r.unwrap()).collect()
}

#[test]
fn riskless_counterparty_prices_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(&["ftd_cva"]);
    s["model"]["lambda_c"] = json!(0.0);
    let out = ccr(dir.path(), "price", &s, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cva = rows(&out).into_iter().find(|r| &r[1] == "cva").unwrap();
    assert_eq!(&cva[0], "ftd_cva");
    assert_eq!(cva[2].parse::<f64>().unwrap(), 0.0);
    assert_eq!(&cva[4], "20000");
    assert_eq!(&cva[5], "11");
}

#[test]
fn invalid_recovery_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(&["ucva_only"]);
    s["model"]["recovery_c"] = json!(1.5);
    let out = ccr(dir.path(), "price", &s, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("recovery_c"));
}

#[test]
fn malformed_specs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(&["ucva_only"]);
    s["model"]["volatility"] = json!(0.1);
    let out = ccr(dir.path(), "price", &s, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("volatility"));
    let out = ccr(dir.path(), "price", &spec(&[]), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("styles"));
    let out = ccr(dir.path(), "tranche", &spec(&["ftd_cva"]), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_matches_the_unilateral_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let all = [
        "ucva_only",
        "bcva_risk_free_closeout",
        "bcva_replacement_closeout",
        "ftd_cva",
        "portable_cva_c1",
        "portable_cva_c2",
        "quadripartite_high_freq",
        "tripartite_periodic",
        "quadripartite_periodic",
        "pentapartite_ccp",
    ];
    let out = ccr(dir.path(), "compare", &spec(&all), &["--paths", "100000"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = rows(&out);
    let ucva = rows.iter().find(|r| &r[0] == "ucva_only" && &r[1] == "cva").unwrap();
    assert!(ucva[7].parse::<f64>().unwrap().abs() < 3.0);
    for r in &rows {
        if !r[7].is_empty() {
            assert!(r[7].parse::<f64>().unwrap().abs() < 4.0, "{r:?}");
        }
    }
    let styles: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    assert_eq!(styles.len(), 10);
}

#[test]
fn reports_are_reproducible_and_written_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(&["ucva_only", "portable_cva_c2"]);
    let path = dir.path().join("report.json");
    let path_arg = path.to_str().unwrap();
    let first = ccr(dir.path(), "compare", &s, &["--format", "json", "--out", path_arg, "--workers", "1"]);
    assert_eq!(first.status.code(), Some(0));
    let a = std::fs::read(&path).unwrap();
    let second = ccr(dir.path(), "compare", &s, &["--format", "json", "--out", path_arg, "--workers", "3"]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(a, std::fs::read(&path).unwrap());
    let json: Value = serde_json::from_slice(&a).unwrap();
    assert!(json.as_array().unwrap().iter().all(|r| r["seed"] == 11 && r["n_paths"] == 20000));
}

#[test]
fn seed_override_changes_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(&["ucva_only"]);
    let a = ccr(dir.path(), "price", &s, &[]);
    let b = ccr(dir.path(), "price", &s, &["--seed", "12"]);
    assert_ne!(rows(&a)[0][2], rows(&b)[0][2]);
    assert_eq!(&rows(&b)[0][5], "12");
}

#[test]
fn failing_expected_pass_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(&["ucva_only", "ftd_cva"]);
    s["checkpoints"] = json!([2.5]);
    s["expect_pass"] = json!(["ftd_cva"]);
    let out = ccr(dir.path(), "check", &s, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cells = rows(&out);
    assert_eq!(cells.len(), 8);
    assert!(cells.iter().any(|r| &r[0] == "ucva_only" && &r[2] == "fail"));
    s["expect_pass"] = json!(["ucva_only"]);
    let out = ccr(dir.path(), "check", &s, &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ucva_only"));
}

#[test]
fn tranche_mode_reports_legs_and_pool_loss() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(&[]);
    s["tranches"] = json!([{"attachment": 0.0, "notional": 0.01}, {"attachment": 0.01, "notional": 0.02}]);
    let out = ccr(dir.path(), "tranche", &s, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = rows(&out);
    assert_eq!(rows.len(), 7);
    let pool = rows.last().unwrap();
    assert_eq!((&pool[0], &pool[1]), ("pool", "expected_loss"));
    assert!(pool[7].parse::<f64>().unwrap().abs() < 3.0);
    let spreads: Vec<f64> = rows.iter().filter(|r| &r[1] == "spread").map(|r| r[2].parse().unwrap()).collect();
    assert!(spreads[1] <= spreads[0]);
}
