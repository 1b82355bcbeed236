//! End-to-end tests of the `delaymoc` binary: exit codes, artifact
//! layout, report contents, and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_delaymoc");

const PARAMS: &str = r#"{
  "k": 23e17, "alpha": 1.7e-4, "beta": 0.8e-3, "s0": 35.0, "vol": 3.5e17,
  "f1_sv": -0.22, "f2_sv": 1.0, "t_star": 0.0, "sigma_sv": 11.0, "tau_yr": 900.0
}"#;

const SIMULATE: &str = r#"{
  "name": "smoke-sim",
  "params_file": "params.json",
  "operation": "simulate",
  "options": { "horizon_yr": 50000.0, "transient_yr": 10000.0 }
}"#;

fn setup(dir: &Path) -> PathBuf {
    std::fs::write(dir.join("params.json"), PARAMS).unwrap();
    let path = dir.join("scenario.json");
    std::fs::write(&path, SIMULATE).unwrap();
    path
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    cmd.env_remove("DELAYMOC_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn validate_accepts_a_good_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = setup(tmp.path());
    let out = run(&["validate", sc.to_str().unwrap()], &[]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
}

#[test]
fn validate_rejects_malformed_json_with_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = run(&["validate", path.to_str().unwrap()], &[]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn validate_rejects_unknown_operation_with_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("params.json"), PARAMS).unwrap();
    let path = tmp.path().join("scenario.json");
    std::fs::write(
        &path,
        r#"{"name":"x","params_file":"params.json","operation":"frobnicate","options":{}}"#,
    )
    .unwrap();
    let out = run(&["validate", path.to_str().unwrap()], &[]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn validate_rejects_missing_scenario_file_with_exit_2() {
    let out = run(&["validate", "/nonexistent/scenario.json"], &[]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn run_simulate_writes_declared_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = setup(tmp.path());
    let out_root = tmp.path().join("out");
    let out = run(
        &["run", sc.to_str().unwrap(), "--out", out_root.to_str().unwrap()],
        &[],
    );
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let dir = out_root.join("smoke-sim");
    let header = std::fs::read_to_string(dir.join("trajectory.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, "t_yr,s1_psu,s2_psu,s3_psu,m_sv");
    let rep = report(&dir);
    assert_eq!(rep["scenario"], "smoke-sim");
    assert!(rep["failures"].as_array().unwrap().is_empty());
    // The artifact list names exactly the files on disk.
    let mut declared: Vec<String> = rep["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    declared.sort();
    let mut on_disk: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    on_disk.sort();
    assert_eq!(declared, on_disk);
    assert!(declared.contains(&"summary.json".to_string()));
}

#[test]
fn reruns_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = setup(tmp.path());
    for out_dir in ["a", "b"] {
        let root = tmp.path().join(out_dir);
        let out = run(
            &["run", sc.to_str().unwrap(), "--out", root.to_str().unwrap()],
            &[],
        );
        assert_eq!(exit_code(&out), 0);
    }
    for name in ["trajectory.csv", "trajectory.json", "summary.json"] {
        let a = std::fs::read(tmp.path().join("a/smoke-sim").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("b/smoke-sim").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn env_var_sets_default_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = setup(tmp.path());
    let root = tmp.path().join("env-out");
    let out = run(
        &["run", sc.to_str().unwrap()],
        &[("DELAYMOC_OUT", root.to_str().unwrap())],
    );
    assert_eq!(exit_code(&out), 0, "{out:?}");
    assert!(root.join("smoke-sim/trajectory.csv").exists());
}

#[test]
fn seed_params_overrides_scenario_params() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = setup(tmp.path());
    let alt = tmp.path().join("alt_params.json");
    std::fs::write(&alt, PARAMS.replace("-0.22", "-0.208")).unwrap();
    let root = tmp.path().join("out");
    let out = run(
        &[
            "run",
            sc.to_str().unwrap(),
            "--out",
            root.to_str().unwrap(),
            "--seed-params",
            alt.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let sidecar =
        std::fs::read_to_string(root.join("smoke-sim/trajectory.json")).unwrap();
    assert!(sidecar.contains("-0.208"), "sidecar params not overridden");
}

#[test]
fn failed_work_items_exit_3_and_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("params.json"), PARAMS).unwrap();
    // No Hopf crossing inside this bracket: the work item fails, the run
    // still produces a report.
    let path = tmp.path().join("scenario.json");
    std::fs::write(
        &path,
        r#"{
          "name": "no-crossing",
          "params_file": "params.json",
          "operation": "criticality",
          "options": { "axis": "f1_sv", "bracket": [-0.24, -0.23] }
        }"#,
    )
    .unwrap();
    let root = tmp.path().join("out");
    let out = run(
        &["run", path.to_str().unwrap(), "--out", root.to_str().unwrap()],
        &[],
    );
    assert_eq!(exit_code(&out), 3, "{out:?}");
    let rep = report(&root.join("no-crossing"));
    assert!(!rep["failures"].as_array().unwrap().is_empty());
}
