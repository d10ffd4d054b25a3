//! Report-content checks: the named stages produce the expected records.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ldlearn")
}

fn scratch(label: &str) -> PathBuf {
    let dir =
        std::env::temp_dir().join(format!("ldlearn-reports-{}-{label}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn jsonl_records(path: &PathBuf) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn ldim_report_on_thresholds_eight() {
    let root = scratch("ldim");
    let config = root.join("config.json");
    fs::write(
        &config,
        r#"{
          "schema": "ldlearn.experiment.v1",
          "class": {"kind": "thresholds", "n": 8},
          "distribution": {"kind": "uniform", "target_id": 4},
          "regime": {"kind": "desk_scale", "leaf_size": 3, "n1": 8, "k": 24, "eta": 0.25},
          "epsilon": 0.5, "delta": 0.05, "trials": 10, "seed": 1
        }"#,
    )
    .unwrap();
    let status = Command::new(bin())
        .args([
            "ldim",
            "--config",
            config.to_str().unwrap(),
            "--out",
            root.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(status.status.success());
    let records = jsonl_records(&root.join("ldim.jsonl"));
    assert_eq!(records[0]["record"], "meta");
    assert!(records[0]["config_hash"].as_str().unwrap().len() == 64);
    let ldim = records.iter().find(|r| r["record"] == "ldim").unwrap();
    assert_eq!(ldim["ldim"], 3);
    let csv = fs::read_to_string(root.join("ldim.csv")).unwrap();
    assert_eq!(csv, "domain_size,class_size,ldim\n8,9,3\n");
}

#[test]
fn bounds_report_at_dimension_one() {
    let root = scratch("bounds");
    let config = root.join("config.json");
    fs::write(
        &config,
        r#"{
          "schema": "ldlearn.experiment.v1",
          "class": {"kind": "inline", "rows": ["00", "11"]},
          "distribution": {"kind": "uniform", "target_id": 1},
          "regime": {"kind": "faithful"},
          "epsilon": 0.5, "delta": 0.05, "trials": 10, "seed": 1
        }"#,
    )
    .unwrap();
    let status = Command::new(bin())
        .args([
            "bounds",
            "--config",
            config.to_str().unwrap(),
            "--out",
            root.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(status.status.success());
    let records = jsonl_records(&root.join("bounds.jsonl"));
    let bounds = records.iter().find(|r| r["record"] == "bounds").unwrap();
    assert_eq!(bounds["n"], 131072);
    assert_eq!(bounds["n1"], 16);
    assert_eq!(bounds["eta"], 0.0625);
    assert_eq!(bounds["k"], 192);
    let t2 = bounds["theorem2_rhs"].as_f64().unwrap();
    assert!((t2 - 7.592_213_536_269_129).abs() < 1e-6);
    let csv = fs::read_to_string(root.join("bounds.csv")).unwrap();
    assert!(csv.starts_with(
        "d,k,eta,n1,theorem1_rhs,theorem2_rhs,failure_bound,entropy_hat,mi_exact,trials,seed\n"
    ));
}

#[test]
fn stability_report_lines_match_contract() {
    let root = scratch("stability");
    let config = root.join("config.json");
    fs::write(
        &config,
        r#"{
          "schema": "ldlearn.experiment.v1",
          "class": {"kind": "inline", "rows": ["00", "11"]},
          "distribution": {"kind": "uniform", "target_id": 1},
          "regime": {"kind": "desk_scale", "leaf_size": 4, "n1": 8, "k": 64, "eta": 0.0625},
          "epsilon": 0.5, "delta": 0.05, "trials": 50, "seed": 5
        }"#,
    )
    .unwrap();
    let status = Command::new(bin())
        .args([
            "stability",
            "--config",
            config.to_str().unwrap(),
            "--out",
            root.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(status.status.success());
    let records = jsonl_records(&root.join("stability.jsonl"));
    let hypothesis = records.iter().find(|r| r["record"] == "hypothesis").unwrap();
    for field in ["id", "labels", "count", "freq"] {
        assert!(hypothesis.get(field).is_some(), "missing {field}");
    }
    let summary = records.iter().find(|r| r["record"] == "summary").unwrap();
    assert_eq!(summary["trials"], 50);
    assert_eq!(summary["regime"], "desk_scale");
    assert_eq!(summary["eta_hat"], 1.0);
}

#[test]
fn failed_stage_removes_earlier_outputs() {
    let root = scratch("cleanup");
    let config = root.join("config.json");
    // the oversized oracle makes the mi stage trip the enumeration guard
    // after ldim/soa/stability/boost have already written their reports
    fs::write(
        &config,
        r#"{
          "schema": "ldlearn.experiment.v1",
          "class": {"kind": "inline", "rows": ["00", "11"]},
          "distribution": {"kind": "uniform", "target_id": 1},
          "regime": {"kind": "desk_scale", "leaf_size": 4, "n1": 8, "k": 64, "eta": 0.0625},
          "epsilon": 0.5, "delta": 0.05, "trials": 20, "seed": 2,
          "exact_oracle": {"n": 10, "k": 10}
        }"#,
    )
    .unwrap();
    let out_dir = root.join("out");
    let out = Command::new(bin())
        .args([
            "all",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let leftovers: Vec<_> = fs::read_dir(&out_dir)
        .map(|d| d.filter_map(|e| e.ok()).collect())
        .unwrap_or_default();
    assert!(leftovers.is_empty(), "stale reports: {leftovers:?}");
}
