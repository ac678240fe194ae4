use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hfo2ps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfo2ps")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const TREE: &str = r#"{"instance": {"kind": "tree", "num_actions": 2, "depth": 3},
    "adversary": {"kind": "iid-expert-rademacher", "layout": "last-layer"},
    "episodes": 20, "algorithm": "hf-o2ps", "seed": 1}"#;

#[test]
fn run_writes_requested_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TREE);
    let out_dir = dir.path().join("out");
    let o = hfo2ps(&["run", "--config", &cfg, "--out-dir", out_dir.to_str().unwrap(), "--format", "csv,svg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("hf-o2ps K=20"));
    assert!(out_dir.join("episodes.csv").exists());
    assert!(out_dir.join("regret.svg").exists());
    assert!(!out_dir.join("summary.json").exists());
    let csv = fs::read_to_string(out_dir.join("episodes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn seed_override_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TREE);
    let read = |seed: &str, name: &str| {
        let d = dir.path().join(name);
        let o = hfo2ps(&["run", "--config", &cfg, "--seed", seed, "--out-dir", d.to_str().unwrap(), "--format", "csv"]);
        assert!(o.status.success());
        fs::read(d.join("episodes.csv")).unwrap()
    };
    assert_eq!(read("5", "a"), read("5", "b"));
    assert_ne!(read("5", "a"), read("6", "c"));
}

#[test]
fn output_section_of_the_config_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("from-config");
    let body = TREE.replacen(
        r#""seed": 1"#,
        &format!(r#""seed": 1, "output": {{"dir": {:?}, "formats": ["json"]}}"#, out_dir.to_str().unwrap()),
        1,
    );
    let cfg = write_config(dir.path(), &body);
    let o = hfo2ps(&["run", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["summary"]["episodes"], 20);
    assert!(out_dir.join("summary.schema.json").exists());
}

#[test]
fn unknown_keys_fail_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TREE.replacen("\"seed\"", "\"sead\"", 1));
    let o = hfo2ps(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sead"));
}

#[test]
fn missing_config_fails() {
    let o = hfo2ps(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TREE);
    let out_dir = dir.path().join("sweep");
    let o = hfo2ps(&[
        "sweep", "--config", &cfg, "--axis", "K", "--values", "10,20", "--seeds", "2",
        "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("log-log slope"));
    assert!(out_dir.join("sweep.csv").exists());
    assert!(out_dir.join("sweep.json").exists());
}

#[test]
fn sweep_rejects_unsupported_axis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TREE);
    let o = hfo2ps(&["sweep", "--config", &cfg, "--axis", "d", "--values", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hfo2ps(&["sweep", "--config", &cfg, "--axis", "T", "--values", "2"]);
    assert!(!o.status.success());
}

#[test]
fn verify_reports_every_check() {
    let o = hfo2ps(&["verify"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    let checks = lines.iter().filter(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")).count();
    let failed = lines.iter().filter(|l| l.starts_with("FAIL ")).count();
    assert!(checks > 20);
    assert_eq!(*lines.last().unwrap(), format!("{checks} checks, {failed} failed"));
    // exit status follows the failure count
    assert_eq!(o.status.code(), Some(if failed == 0 { 0 } else { 1 }));
}
