use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ztmeta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ztmeta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = ztmeta(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn report(dir: &Path, extra: &[&str]) -> Value {
    let mut args = vec![
        "report",
        "--b",
        "100",
        "--seed",
        "1",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = ztmeta(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

#[test]
fn report_headline_values() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(dir.path(), &[]);
    assert_eq!(r["schema_version"], 1);
    assert!((f(&r["naive_linear"]) - 4.45e-4).abs() < 1e-6);
    assert!((f(&r["zt_rate"]) - 3.18e-4).abs() < 5e-7);
    assert_eq!(r["total_missing"], 107);
    assert_eq!(r["selected_model"], "zt-poisson-lp1");
}

#[test]
fn report_is_byte_identical_for_same_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    report(a.path(), &[]);
    report(b.path(), &[]);
    let read = |d: &Path| std::fs::read(d.join("report.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn csv_report_writes_keyed_tables() {
    let dir = tempfile::tempdir().unwrap();
    report(dir.path(), &["--format", "csv"]);
    for name in [
        "excluded_studies",
        "rate_intervals",
        "count_intervals",
        "chi_square",
        "truncated_models",
    ] {
        let path = dir.path().join(format!("{name}.csv"));
        assert!(path.exists(), "{name}.csv missing");
    }
    let strata = std::fs::read_to_string(dir.path().join("excluded_studies.csv")).unwrap();
    assert!(
        strata.starts_with("stratum,observed,missing,rounded\n"),
        "{strata}"
    );
}

#[test]
fn missing_input_fails_with_path() {
    let out = ztmeta(&["--input", "/no/such/studies.csv", "fit"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/no/such/studies.csv"), "{err}");
    assert!(err.contains("stage load"), "{err}");
}

#[test]
fn malformed_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "id,person_years\nA,12\n").unwrap();
    let out = ztmeta(&["--input", path.to_str().unwrap(), "fit"]);
    assert!(!out.status.success());
}

#[test]
fn fit_poisson_intercept() {
    let v = json(&[
        "fit", "--family", "poisson", "--lp", "1", "--format", "json",
    ]);
    assert!((f(&v["beta"][0]) + 8.055).abs() < 5e-4);
    assert!((f(&v["loglik"]) + 23.725).abs() < 1e-3);
    assert_eq!(v["converged"], true);
}

#[test]
fn fit_grid_selects_poisson_lp1() {
    let v = json(&["fit", "--format", "json"]);
    assert_eq!(v["selected_model"], "zt-poisson-lp1");
    assert!((f(&v["zt_rate_per_100k"]) - 31.75).abs() < 0.01);
}

#[test]
fn gof_statistic() {
    let v = json(&["gof", "--format", "json"]);
    assert!((f(&v["chi_square"]) - 1.59).abs() < 0.01);
    assert!((f(&v["p_value"]) - 0.45).abs() < 0.01);
    assert_eq!(v["dof"], 2);
    let observed: Vec<u64> = v["bins"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["observed"].as_u64().unwrap())
        .collect();
    assert_eq!(observed, [18, 3, 3, 3]);
}

#[test]
fn population_default_strata() {
    let v = json(&["population", "--strata", "default", "--format", "json"]);
    let rounded: Vec<u64> = v["strata"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["missing_rounded"].as_u64().unwrap())
        .collect();
    assert_eq!(rounded, [0, 0, 22, 8, 42, 23, 7, 5]);
    assert_eq!(v["total_missing"], 107);
}

#[test]
fn text_output_has_table_headers() {
    let out = ztmeta(&["population"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Others [0.00,0.75)"), "{text}");
}

#[test]
fn invalid_lp_rejected() {
    let out = ztmeta(&["fit", "--family", "poisson", "--lp", "6"]);
    assert!(!out.status.success());
}
