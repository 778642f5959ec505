//! Exit codes and outputs of the command-line tool.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use operator_root::cli::ResultRecord;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("operator-root-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(task: &str, config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_operator-root"))
        .arg(task)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg("1")
        .output()
        .unwrap()
}

#[test]
fn missing_config_is_a_config_error() {
    let out = scratch("missing");
    let o = run("solve", &out.join("nope.json"), &out);
    assert_eq!(o.status.code(), Some(1));
    std::fs::remove_dir_all(out).ok();
}

#[test]
fn unknown_key_is_a_config_error() {
    let out = scratch("unknown");
    let text = std::fs::read_to_string(configs_dir().join("reference.json")).unwrap();
    let text = text.replacen("\"task\"", "\"bogus\": 1, \"task\"", 1);
    let cfg = out.join("cfg.json");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(run("solve", &cfg, &out).status.code(), Some(1));
    std::fs::remove_dir_all(out).ok();
}

#[test]
fn inadmissible_contour_exits_two() {
    let out = scratch("inadmissible");
    let text = std::fs::read_to_string(configs_dir().join("reference.json")).unwrap();
    let text = text.replace("\"target_variation\": 0.1875", "\"target_variation\": 0.3");
    assert!(text.contains("0.3"));
    let cfg = out.join("cfg.json");
    std::fs::write(&cfg, text).unwrap();
    let o = run("solve", &cfg, &out);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("V0"));
    std::fs::remove_dir_all(out).ok();
}

#[test]
fn zero_coupling_returns_the_bare_spectrum() {
    let out = scratch("zero");
    let o = run("solve", &configs_dir().join("zero_coupling.json"), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = ResultRecord::from_json(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    let mut got: Vec<f64> = rec.eigenvalues.iter().map(|e| e.value.re).collect();
    got.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(got, vec![1.0, 2.5, 4.0, 6.0]);
    assert!(rec.eigenvalues.iter().all(|e| e.value.im == 0.0));
    assert_eq!(rec.config_hash.len(), 64);
    std::fs::remove_dir_all(out).ok();
}

#[test]
fn failed_probe_check_exits_four() {
    let out = scratch("probe");
    let o = run("verify", &configs_dir().join("broken_probe.json"), &out);
    assert_eq!(o.status.code(), Some(4));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("continuation_residue") && l.contains("FAIL")), "{stdout}");
    std::fs::remove_dir_all(out).ok();
}
