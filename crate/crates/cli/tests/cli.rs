use std::path::Path;
use std::process::{Command, Output};

fn deul(args: &[&str], out: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_deul"));
    c.args(args).env_remove("DEUL_OUT");
    if let Some(o) = out {
        c.arg("--out").arg(o);
    }
    c.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn green_writes_csv_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = deul(&["green", "--k", "0.3", "--s", "2", "--t-end", "200", "--samples", "12"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("green.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    let first_value = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    // 17 significant digits
    assert_eq!(first_value.split('e').next().unwrap().trim_start_matches('-').replace('.', "").len(), 17);
}

#[test]
fn multipliers_without_output_dir_write_nothing() {
    let o = deul(&["multipliers", "--k", "1", "--t-end", "50", "--samples", "8"], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("wrote"));
}

#[test]
fn env_var_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_deul"))
        .args(["multipliers", "--k", "1", "--t-end", "50", "--samples", "8"])
        .env("DEUL_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("multipliers.csv").exists());
}

#[test]
fn invalid_configuration_exits_two_with_json_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[law]\nlambda = 1.5\n");
    let o = deul(&["--config", &cfg, "diag"], None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    let json_line = err.lines().find(|l| l.starts_with('{')).expect("json summary");
    let v: serde_json::Value = serde_json::from_str(json_line).unwrap();
    assert_eq!(v["exit_code"], 2);
    assert_eq!(v["error_kind"], "config");

    let cfg = write_config(dir.path(), "[law]\nunknown = 1\n");
    assert_eq!(deul(&["--config", &cfg, "diag"], None).status.code(), Some(2));
    assert_eq!(deul(&["verify-all", "--only", "99"], None).status.code(), Some(2));
}

#[test]
fn window_violation_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[solver]\nL = 50\nN = 64\nT = 40\ndt = 0.25\n");
    assert_eq!(deul(&["--config", &cfg, "nonlinear"], None).status.code(), Some(2));
}

#[test]
fn small_nonlinear_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[solver]\nL = 50\nN = 128\nT = 4\ndt = 0.0625\n");
    let out = dir.path().join("out");
    let snap = dir.path().join("final.bin");
    let o = deul(&["--config", &cfg, "nonlinear", "--compare-linear", "--snapshot", snap.to_str().unwrap()], Some(&out));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    for f in ["nonlinear_series.csv", "nonlinear_ledger.csv", "nonlinear.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let (n, l, t, _) = deul_core::nonlinear::read_snapshot(&snap).unwrap();
    assert_eq!((n, l, t), (128, 50.0, 4.0));
}

#[test]
fn verify_subset_exit_codes() {
    let o = deul(&["verify-all", "--quick", "--only", "7,13"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
    // the derivative ladder fails on measurement, so the suite reports failure
    assert_eq!(deul(&["verify-all", "--quick", "--only", "3"], None).status.code(), Some(1));
}
