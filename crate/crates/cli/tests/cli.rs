use std::path::PathBuf;
use std::process::{Command, Output};

use expanderlab::io::{read_csv, RunManifest};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expanderlab")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("expanderlab-cli-{}-{name}", std::process::id()))
}

#[test]
fn profile_writes_manifest_and_csv() {
    let dir = scratch("profile");
    let out = cli(&["profile", "--d", "3", "--ell", "1.0", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = RunManifest::read(&dir.join("manifest.json")).unwrap();
    assert_eq!(m.command, "profile");
    assert!((m.derived_constants["psi_inf"].value - 1.0).abs() < 1e-9);
    assert!(m.derived_constants.contains_key("r0"));
    let rows = read_csv(&dir.join("profile.csv")).unwrap();
    assert!(rows.len() > 10 && rows.iter().all(|r| r.len() == 3));
    let argv: Vec<String> = serde_json::from_value(m.parameters["argv"].clone()).unwrap();
    assert!(!argv.iter().any(|a| a.starts_with("--out")));
}

#[test]
fn usage_errors_exit_with_one() {
    for args in [
        &["profile", "--d", "2", "--alpha", "1"][..],
        &["profile", "--d", "3", "--alpha", "1", "--tol", "1e-3"],
        &["profile", "--d", "3"],
        &["scan", "--d", "3", "--grid", "nonsense"],
        &["critical", "--d", "3", "--rho-max", "5"],
        &["frobnicate"],
    ] {
        let out = cli(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn unreachable_targets_are_numerical_failures() {
    let dir = scratch("unreachable");
    let out = cli(&["profile", "--d", "7", "--ell", "1.6", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = scratch("config");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, r#"{"tol": 1e-8, "rho_max": 40.0}"#).unwrap();
    let out_dir = dir.join("run");
    let out = cli(&["--config", cfg.to_str().unwrap(), "--tol", "1e-9", "profile", "--d", "4", "--alpha", "1", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let m = RunManifest::read(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(m.parameters["tol"], serde_json::json!(1e-9));
    assert_eq!(m.parameters["rho_max"], serde_json::json!(40.0));
}

#[test]
fn hardy_constant_is_reported_by_critical() {
    let dir = scratch("critical");
    let out = cli(&["critical", "--d", "6", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("1.2500000000000000e0"), "{text}");
}
