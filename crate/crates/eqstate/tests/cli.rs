use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqstate")).args(args).arg("--out").arg(out).output().unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn verify_doubling_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("doubling.json");
    let o = run(&["verify", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path());
    assert_eq!(m["manifest_version"], 1);
    assert_eq!(m["subcommand"], "verify");
    assert_eq!(m["exit_code"], 0);
    for key in ["config", "parameters", "seed", "threads", "wall_time_seconds", "outputs", "version"] {
        assert!(m.get(key).is_some(), "manifest lacks {key}");
    }
}

#[test]
fn pressure_of_the_two_shift_is_log_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_shift.json");
    let o = run(&["pressure", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("P = 1.098612288668"), "{text}");
}

#[test]
fn large_oscillation_is_a_hypothesis_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("benchmark_log3.json");
    let o = run(&["verify", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("(e.epsilon2)"));
    assert_eq!(manifest(dir.path())["exit_code"], 2);
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["nonsense"], dir.path()).status.code(), Some(64));
    assert_eq!(run(&["pressure", "--depth", "0"], dir.path()).status.code(), Some(64));
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["pressure", missing.to_str().unwrap()], dir.path()).status.code(), Some(64));
}

#[test]
fn flags_override_the_config_and_json_output_parses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("benchmark.json");
    let o = run(&["pressure", cfg.to_str().unwrap(), "--depth", "5", "--json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
    assert_eq!(manifest(dir.path())["config"]["depth"], 5);
}

#[test]
fn count_writes_a_csv_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["count", "--n", "20", "--p", "2", "--q", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("count.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,rate"));
    assert_eq!(lines.count(), 20);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let cfg = configs().join("doubling.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["clt", cfg.to_str().unwrap(), "--n", "500", "--samples", "500", "--seed", "3"], d.path());
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(a.path().join("clt.csv")).unwrap(), std::fs::read(b.path().join("clt.csv")).unwrap());
}
