//! The `merw` binary: artifacts, exit codes and reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn merw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_merw"))
        .args(args)
        .env("MERW_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn box_diffusion_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bd");
    let o = merw(&["box-diffusion", "--dims", "1", "--sites", "33", "--steps", "16,256", "--out", &out_arg(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["data/psi_tau16.csv", "data/psi_tau256.csv", "report.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(out.join("data/psi_tau16.csv")).unwrap();
    assert_eq!(csv.lines().count(), 34);
    assert!(csv.starts_with("site_index,x1,psi_ratio,gaussian,ground_ratio\n"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for key in ["experiment", "parameters", "values", "tolerances", "pass"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    assert_eq!(report["pass"], true);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["sites"], 33);
    assert_eq!(manifest["config"]["steps"], serde_json::json!([16, 256]));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = merw(&["entropy-landscape", "--scheme", "around_first", "--grid", "21", "--out", &out_arg(dir)]);
        assert_eq!(o.status.code(), Some(0));
    }
    let name = "data/landscape_around_first.csv";
    assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
}

#[test]
fn entropy_growth_rises_to_stationary_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("eg");
    let o = merw(&["entropy-growth", "--steps-pow2", "0..8", "--out", &out_arg(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("data/entropy_growth.csv")).unwrap();
    let h: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(h.len(), 9);
    assert!(h.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn landscape_csv_has_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("el");
    let o = merw(&["entropy-landscape", "--sites", "65", "--scheme", "around_ground", "--radius2", "0.06", "--out", &out_arg(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("data/landscape_around_ground.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("alpha,beta,H,valid"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 41 * 41);
    assert!(rows.iter().any(|r| r.ends_with(",,0")));
    assert!(rows.iter().any(|r| r.ends_with(",1")));
}

#[test]
fn config_file_runs_and_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.json");
    fs::write(&good, r#"{"experiment": "expansion-check", "potential": "linear:0.3"}"#).unwrap();
    let out = tmp.path().join("ex");
    let o = merw(&["run", "--config", good.to_str().unwrap(), "--out", &out_arg(&out), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["experiment"], "expansion-check");

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"experiment": "expansion-check", "sitez": 3}"#).unwrap();
    let o = merw(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(merw(&["potential-solve", "--potential", "morse:1"]).status.code(), Some(2));
    assert_eq!(merw(&["entropy-growth", "--steps-pow2", "3"]).status.code(), Some(2));
    assert_eq!(merw(&["no-such-experiment"]).status.code(), Some(2));
    assert_eq!(merw(&["verify", "--only", "99"]).status.code(), Some(2));
}

#[test]
fn failed_check_exits_one_and_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let o = merw(&[
        "expansion-check",
        "--tolerance",
        "log-log slope=5",
        "--out",
        &out_arg(&tmp.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("log-log slope"));
}

#[test]
fn verify_json_schema_and_tampering() {
    let o = merw(&["verify", "--only", "5,6", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let reports: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let list = reports.as_array().unwrap();
    assert_eq!(list.len(), 2);
    for r in list {
        for key in ["id", "name", "checks", "pass", "seconds", "error"] {
            assert!(r.get(key).is_some(), "{key}");
        }
    }
    let o = merw(&["verify", "--only", "6", "--tolerance", "max |H(k) - k H|, k <= 8=-1"]);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("FAIL [ 6] entropy telescoping"));
}
