use std::path::Path;
use std::process::{Command, Output};

fn cml(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cml"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn cml")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = "n = 2\ngamma_values = [0.1, 0.3]\nlength = 2000\nrealizations = 2\nseed = 5\n";

#[test]
fn theory_writes_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cml(&["theory", "--out", "res"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("res/theory.csv")).unwrap();
    assert!(csv.starts_with("n,gamma,theta_theory"));
    assert!(tmp.path().join("res/manifest.json").exists());
}

#[test]
fn default_output_directory_is_named_after_the_command() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = cml(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("out/simulate/trajectory.csv").exists());
}

#[test]
fn manifest_reruns_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    assert_eq!(cml(&["ei-sweep", "--config", &cfg, "--out", "a"], tmp.path()).status.code(), Some(0));
    let out = cml(&["ei-sweep", "--config", "a/manifest.json", "--out", "b"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("byte-for-byte"));
    for name in ["ei_sweep.csv", "ei_estimates.json", "manifest.json"] {
        let a = std::fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn tampered_output_hash_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    assert_eq!(cml(&["theory", "--config", &cfg, "--out", "a"], tmp.path()).status.code(), Some(0));
    let path = tmp.path().join("a/manifest.json");
    let mut m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    m["outputs"]["theory.csv"] = serde_json::Value::String("00".repeat(32));
    std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    let out = cml(&["theory", "--config", "a/manifest.json", "--out", "b"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theory.csv"));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = cml(&["simulate", "--config", &cfg, "--seed", "77", "--out", "s"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("s/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["seed"], 77);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    for (threads, dir) in [("1", "t1"), ("4", "t4")] {
        let out = cml(&["ei-sweep", "--config", &cfg, "--threads", threads, "--out", dir], tmp.path());
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(tmp.path().join("t1/ei_sweep.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("t4/ei_sweep.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cml(&["reproduce", "fig99"], tmp.path()).status.code(), Some(2));
    assert_eq!(cml(&["theory", "--config", "missing.toml"], tmp.path()).status.code(), Some(2));
    let bad = write_config(tmp.path(), "quantile = 1.5\n");
    assert_eq!(cml(&["ei-sweep", "--config", &bad], tmp.path()).status.code(), Some(2));
    let unknown = write_config(tmp.path(), "no_such_key = 1\n");
    assert_eq!(cml(&["ei-sweep", "--config", &unknown], tmp.path()).status.code(), Some(2));
    let spectral = write_config(tmp.path(), "n = 3\ngamma = 0.2\n");
    assert_eq!(cml(&["spectral", "--config", &spectral], tmp.path()).status.code(), Some(2));
    assert_eq!(cml(&["theory", "--threads", "0"], tmp.path()).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n = 2\ngamma = 0.3\nensemble = 10\ncalibration_length = 10000\n");
    let out = cml(&["compound-poisson", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gamma_above_reference_bound_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n = 2\ngamma_values = [0.7]\nlength = 1000\n");
    let out = cml(&["ei-sweep", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}
