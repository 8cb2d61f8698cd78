use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn refcrdt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refcrdt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_trace(dir: &Path, seed: u64) -> String {
    let out = refcrdt(&["generate", "--seed", &seed.to_string(), "--events", "15"]);
    assert_eq!(out.status.code(), Some(0));
    let path = dir.join(format!("seed-{seed}.trace"));
    fs::write(&path, &out.stdout).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn clean_campaign_exits_zero() {
    let out = refcrdt(&["run", "--seed", "7", "--executions", "50", "--mode", "atomic"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("I1"));
    assert!(text.contains("violations: 0"));
}

#[test]
fn bad_configuration_exits_two() {
    assert_eq!(refcrdt(&["run", "--executions", "0"]).status.code(), Some(2));
    assert_eq!(refcrdt(&["run", "--replicas", "0"]).status.code(), Some(2));
    assert_eq!(refcrdt(&["run", "--mode", "eventual"]).status.code(), Some(2));
    assert_eq!(refcrdt(&["explore", "--events", "6"]).status.code(), Some(2));
}

#[test]
fn generated_trace_checks_clean() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_trace(dir.path(), 11);
    let out = refcrdt(&["check", &path]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn generate_is_deterministic() {
    let a = refcrdt(&["generate", "--seed", "5"]);
    let b = refcrdt(&["generate", "--seed", "5"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn malformed_trace_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.trace");
    fs::write(&path, "not json\n").unwrap();
    let out = refcrdt(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    let missing = dir.path().join("absent.trace");
    assert_eq!(refcrdt(&["check", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn tampered_trace_is_a_replay_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_trace(dir.path(), 4);
    let text = fs::read_to_string(&path).unwrap();
    // Dropping a line leaves a gap in the step numbers.
    let lines: Vec<&str> = text.lines().collect();
    let pos = lines.iter().position(|l| l.contains("\"deliver\"")).unwrap();
    let mut kept: Vec<String> = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        if i != pos {
            kept.push(l.to_string());
        }
    }
    fs::write(&path, kept.join("\n") + "\n").unwrap();
    assert_eq!(refcrdt(&["check", &path]).status.code(), Some(2));
}

#[test]
fn export_dot_prints_a_digraph() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_trace(dir.path(), 2);
    let out = refcrdt(&["export-dot", &path, "--step", "5", "--replica", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("digraph"));
    let far = refcrdt(&["export-dot", &path, "--step", "100000", "--replica", "0"]);
    assert_eq!(far.status.code(), Some(2));
    let nobody = refcrdt(&["export-dot", &path, "--step", "0", "--replica", "9"]);
    assert_eq!(nobody.status.code(), Some(2));
}

#[test]
fn scenarios_pass_and_write_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let out = refcrdt(&["scenario", "fig2", "--dot", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    for r in 0..3 {
        let doc = fs::read_to_string(dir.path().join(format!("fig2-r{r}.dot"))).unwrap();
        assert!(doc.contains("digraph"));
    }
    let out = refcrdt(&["scenario", "fig1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(!stdout(&out).contains("FAIL"));
}

#[test]
fn small_exploration_is_clean() {
    let out = refcrdt(&["explore", "--events", "1", "--catalog"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("atomic<=causal"));
}
