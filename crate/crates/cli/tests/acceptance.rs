//! Acceptance suite for the orchestrator: reruns with identical
//! configuration and seed must produce byte-identical report files,
//! independent of the `--threads` cap; error paths map to their exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ldlearn")
}

const TOY_CONFIG: &str = r#"{
  "schema": "ldlearn.experiment.v1",
  "class": {"kind": "inline", "rows": ["00", "11"]},
  "distribution": {"kind": "uniform", "target_id": 1},
  "regime": {"kind": "desk_scale", "leaf_size": 4, "n1": 8, "k": 64, "eta": 0.0625},
  "epsilon": 0.5,
  "delta": 0.05,
  "trials": 300,
  "seed": 20260809,
  "exact_oracle": {"n": 1, "k": 3}
}"#;

const AFFINE_CONFIG: &str = r#"{
  "schema": "ldlearn.experiment.v1",
  "class": {"kind": "affine", "q": 3, "l": 2, "d": 1},
  "distribution": {"kind": "uniform", "target_id": 5},
  "regime": {"kind": "desk_scale", "leaf_size": 4, "n1": 8, "k": 36, "eta": 0.3333333333333333},
  "epsilon": 0.5,
  "delta": 0.05,
  "trials": 300,
  "seed": 7
}"#;

fn scratch(label: &str) -> PathBuf {
    let dir =
        std::env::temp_dir().join(format!("ldlearn-acceptance-{}-{label}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// Criterion 12: rerunning any experiment with the same config and seed
/// yields byte-identical reports, whatever `--threads` says.
#[test]
fn acceptance_12_deterministic_reports() {
    let root = scratch("det");
    let mut compared = 0usize;
    for (name, config) in [("toy", TOY_CONFIG), ("affine", AFFINE_CONFIG)] {
        let config_path = root.join(format!("{name}.json"));
        fs::write(&config_path, config).unwrap();
        let mut snapshots = Vec::new();
        for threads in ["1", "4", "2"] {
            let out = root.join(format!("{name}-t{threads}"));
            let status = Command::new(bin())
                .args([
                    "all",
                    "--config",
                    config_path.to_str().unwrap(),
                    "--threads",
                    threads,
                    "--out",
                    out.to_str().unwrap(),
                ])
                .output()
                .unwrap();
            assert!(
                status.status.success(),
                "{name} run with --threads {threads} failed"
            );
            snapshots.push(snapshot(&out));
        }
        for later in &snapshots[1..] {
            assert_eq!(
                &snapshots[0], later,
                "{name}: reports differ across thread counts"
            );
            compared += 1;
        }
        assert!(snapshots[0].len() >= 12, "{name}: expected full report set");
    }
    println!("ACCEPTANCE 12 PASS: byte-identical reports across {compared} thread-count reruns");
}

#[test]
fn seed_precedence_flag_env_config() {
    let root = scratch("seed");
    let config_path = root.join("toy.json");
    fs::write(&config_path, TOY_CONFIG).unwrap();

    let run = |out: &Path, seed_flag: Option<&str>, env_seed: Option<&str>| {
        let mut cmd = Command::new(bin());
        cmd.args([
            "stability",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        if let Some(seed) = seed_flag {
            cmd.args(["--seed", seed]);
        }
        if let Some(seed) = env_seed {
            cmd.env("LDLEARN_SEED", seed);
        }
        assert!(cmd.output().unwrap().status.success());
    };

    let by_flag = root.join("flag");
    let by_env = root.join("env");
    let by_config = root.join("config");
    run(&by_flag, Some("99"), None);
    run(&by_env, None, Some("99"));
    run(&by_config, None, None);
    assert_eq!(snapshot(&by_flag), snapshot(&by_env));
    assert_ne!(snapshot(&by_flag), snapshot(&by_config));

    // the flag wins over the environment
    let flag_over_env = root.join("flag-env");
    run(&flag_over_env, Some("99"), Some("123"));
    assert_eq!(snapshot(&flag_over_env), snapshot(&by_flag));
}

#[test]
fn exit_codes_match_error_classes() {
    let root = scratch("codes");

    // 2: config error (bad schema)
    let bad_schema = root.join("bad.json");
    fs::write(
        &bad_schema,
        TOY_CONFIG.replace("ldlearn.experiment.v1", "nope.v0"),
    )
    .unwrap();
    let out = Command::new(bin())
        .args([
            "ldim",
            "--config",
            bad_schema.to_str().unwrap(),
            "--out",
            root.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "bad schema: {out:?}");

    // 2: missing config file
    let out = Command::new(bin())
        .args([
            "ldim",
            "--config",
            root.join("absent.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // 2: threshold invariant eta*k/2 >= 2 violated
    let bad_k = root.join("badk.json");
    fs::write(&bad_k, TOY_CONFIG.replace("\"k\": 64", "\"k\": 8")).unwrap();
    let out = Command::new(bin())
        .args([
            "ldim",
            "--config",
            bad_k.to_str().unwrap(),
            "--out",
            root.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // 3: exact-enumeration resource guard
    let huge_oracle = root.join("huge.json");
    fs::write(
        &huge_oracle,
        TOY_CONFIG.replace("{\"n\": 1, \"k\": 3}", "{\"n\": 10, \"k\": 10}"),
    )
    .unwrap();
    let out = Command::new(bin())
        .args([
            "mi",
            "--config",
            huge_oracle.to_str().unwrap(),
            "--out",
            root.join("x").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "guard: {out:?}");

    // 4: unwritable output path
    let cfg = root.join("toy.json");
    fs::write(&cfg, TOY_CONFIG).unwrap();
    let out = Command::new(bin())
        .args([
            "ldim",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "/proc/ldlearn-denied",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "io: {out:?}");
}
