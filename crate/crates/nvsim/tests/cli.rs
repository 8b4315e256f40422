//! End-to-end tests of the `nvsim` binary: exit codes, output files,
//! replayability, and diagnostics.

use std::path::Path;
use std::process::{Command, Output};

fn nvsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("missing {name}: {e}"))
}

#[test]
fn odmr_writes_spectrum_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvsim(&["odmr", "--out", "."], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "odmr.csv");
    assert!(csv.starts_with("# experiment = odmr"));
    // locate the fluorescence minimum: must sit at the zero-field resonance
    let mut best = (0.0f64, f64::INFINITY);
    for line in csv.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let mut it = line.split(',');
        let f: f64 = it.next().unwrap().parse().unwrap();
        let v: f64 = it.next().unwrap().parse().unwrap();
        if v < best.1 {
            best = (f, v);
        }
    }
    assert!((best.0 - 2880.0).abs() < 1.0, "dip at {} MHz", best.0);
    let manifest = read(dir.path(), "odmr_manifest.json");
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["experiment"], "odmr");
    assert!(m["outputs"].as_array().unwrap().len() == 1);
}

#[test]
fn zeno_json_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvsim(&["zeno", "--lambda-t", "1", "--n", "4", "--out", "."], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&read(dir.path(), "zeno.json")).unwrap();
    let p = v["p_surv"].as_f64().unwrap();
    assert!((p - 0.7931).abs() < 1e-4, "p_surv {p}");
}

#[test]
fn bell_tomography_json_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvsim(&["bell-tomography", "--state", "psi-minus", "--out", "."], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "bell-tomography.json")).unwrap();
    assert_eq!(v["rho"]["real"].as_array().unwrap().len(), 4);
    assert_eq!(v["rho"]["imag"][0].as_array().unwrap().len(), 4);
    assert!(v["fidelity_vs_ideal"].as_f64().unwrap() > 0.99);
}

#[test]
fn stochastic_replay_is_byte_identical() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let args = ["readout", "--n-windows", "2000", "--seed", "7", "--out", "."];
    assert!(nvsim(&args, d1.path()).status.success());
    assert!(nvsim(&args, d2.path()).status.success());
    assert_eq!(
        read(d1.path(), "readout_histogram.csv"),
        read(d2.path(), "readout_histogram.csv")
    );
    // a different seed must change the data
    let d3 = tempfile::tempdir().unwrap();
    let args3 = ["readout", "--n-windows", "2000", "--seed", "8", "--out", "."];
    assert!(nvsim(&args3, d3.path()).status.success());
    assert_ne!(
        read(d1.path(), "readout_histogram.csv"),
        read(d3.path(), "readout_histogram.csv")
    );
}

#[test]
fn config_file_drives_run_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "seed = 3\n[odmr]\nf_start_mhz = 2850.0\nf_stop_mhz = 2910.0\nn_points = 301\n",
    )
    .unwrap();
    let out = nvsim(&["odmr", "--config", "exp.toml", "--out", "."], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "odmr.csv");
    let first_data = csv.lines().find(|l| !l.starts_with('#') && !l.starts_with("freq")).unwrap();
    assert!(first_data.starts_with("2850,"), "config sweep not used: {first_data}");
}

#[test]
fn unknown_config_key_is_positioned_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "experiment = \"odmr\"\nnonsense = 1\n").unwrap();
    let out = nvsim(&["odmr", "--config", "bad.toml", "--out", "."], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
    assert!(!dir.path().join("odmr.csv").exists(), "partial output left behind");
}

#[test]
fn invalid_parameter_exits_one_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[excitation]\nlifetime_ns = -1.0\n").unwrap();
    let out = nvsim(&["excitation-line", "--config", "bad.toml", "--out", "."], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("excitation-line.csv").exists());
}

#[test]
fn validate_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ok.toml"), "experiment = \"zeno\"\n").unwrap();
    let out = nvsim(&["validate", "--config", "ok.toml"], dir.path());
    assert!(out.status.success());

    std::fs::write(dir.path().join("bad.toml"), "experiment = \"frob\"\n").unwrap();
    let out = nvsim(&["validate", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("frob") && err.contains("zeno"), "stderr: {err}");
}

#[test]
fn json_format_curve_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvsim(&["g2", "--emitter", "ne8", "--format", "json", "--out", "."], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&read(dir.path(), "g2.json")).unwrap();
    let g2 = v["columns"]["g2"].as_array().unwrap();
    assert_eq!(g2[0].as_f64().unwrap(), 0.0);
    let tail = g2.last().unwrap().as_f64().unwrap();
    assert!((tail - 1.0).abs() < 0.05);
}

#[test]
fn eit_metadata_reports_feature() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvsim(&["eit", "--out", "."], dir.path());
    assert!(out.status.success());
    let csv = read(dir.path(), "eit.csv");
    let line = csv
        .lines()
        .find(|l| l.starts_with("# feature_center_mhz"))
        .expect("feature metadata present");
    let center: f64 = line.rsplit('=').next().unwrap().trim().parse().unwrap();
    assert!((center - 2797.0).abs() < 0.1, "feature at {center}");
}
