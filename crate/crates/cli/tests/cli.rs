//! The `afslab` binary: exit codes, output layout and digest tagging.

use std::path::Path;
use std::process::{Command, Output};

const REFERENCE: &str = "[base]\nd = 1\nbeta = \"1\"\nb0 = \"5\"\np0 = \"23^-4\"\nl0 = \"11^256\"\nk_max = 60\n";

fn afslab(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_afslab"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("AFSLAB_OUT")
        .output()
        .unwrap()
}

fn manifest(dir: &Path, cmd: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("out").join(cmd).join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn reference_certificate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = afslab(dir.path(), REFERENCE, &["certify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(dir.path(), "certify");
    assert_eq!(m["passed"], true);
    let names: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["certificate.json", "certify.checks.csv", "certify.esl.csv"]);
    let esl = std::fs::read_to_string(dir.path().join("out/certify/certify.esl.csv")).unwrap();
    let digest = m["config_digest"].as_str().unwrap();
    assert!(esl.lines().skip(1).all(|l| l.starts_with(digest)));
    // delta increases past the switch scale
    let deltas: Vec<f64> = esl.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(deltas[32..].windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn threshold_violation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = afslab(dir.path(), &REFERENCE.replace("23^-4", "23^-1"), &["certify"]);
    assert_eq!(out.status.code(), Some(1));
    let cert = std::fs::read_to_string(dir.path().join("out/certify/certificate.json")).unwrap();
    assert!(cert.contains("threshold-violated"));
}

#[test]
fn small_l0_fails_the_named_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = afslab(dir.path(), &REFERENCE.replace("11^256", "11^10"), &["certify"]);
    assert_eq!(out.status.code(), Some(1));
    let checks = std::fs::read_to_string(dir.path().join("out/certify/certify.checks.csv")).unwrap();
    assert!(checks.lines().any(|l| l.contains(",L0-threshold,,false,")));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(afslab(dir.path(), "[base]\nd = 1\n", &["certify"]).status.code(), Some(2));
    assert_eq!(afslab(dir.path(), REFERENCE, &["wegner"]).status.code(), Some(2));
    assert_eq!(afslab(dir.path(), "[run]\nbogus = 1\n", &["certify"]).status.code(), Some(2));
    assert_eq!(afslab(dir.path(), REFERENCE, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(afslab(dir.path(), REFERENCE, &["certify", "--workers", "0"]).status.code(), Some(2));
}

#[test]
fn env_overrides_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, REFERENCE).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_afslab"))
        .args(["certify", "--out", "ignored", "--config"])
        .arg(&config)
        .env("AFSLAB_OUT", dir.path().join("env"))
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(dir.path().join("env/certify/certificate.json").exists());
}

#[test]
fn sample_records_carry_the_digest_and_seed_changes_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = "[run]\nn = 50\nseed = 3\n\n[disorder]\nfamily = \"uniform\"\na = 0.0\nb = 1.0\namplitude = 10.0\n\n\
                  [desk]\nd = 1\nbeta = \"1\"\nb0 = \"5\"\np0 = \"23^-4\"\nl0 = \"3\"\nenergy = -17493.7\n";
    let out = afslab(dir.path(), config, &["estimate-p0"]);
    assert_eq!(out.status.code(), Some(0));
    let digest = manifest(dir.path(), "estimate-p0")["config_digest"].as_str().unwrap().to_owned();
    let lines = std::fs::read_to_string(dir.path().join("out/estimate-p0/estimate-p0.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 50);
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["config_digest"], digest.as_str());
    }
    afslab(dir.path(), config, &["estimate-p0", "--seed", "4"]);
    assert_ne!(manifest(dir.path(), "estimate-p0")["config_digest"].as_str().unwrap(), digest);
}
