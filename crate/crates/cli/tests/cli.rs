use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn sdgpb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdgpb"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn error_json(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr is empty");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{line}: {e}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_fixtures_succeeds() {
    let work = tempfile::tempdir().unwrap();
    let out = sdgpb(&[
        "validate-fixtures",
        "--fixtures",
        s(&fixtures()),
        "--work-dir",
        s(work.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["validate_fixtures"], "ok");
}

#[test]
fn run_stop_resume_and_report_round_trip() {
    let work = tempfile::tempdir().unwrap();
    let config = fixtures().join("fixtures.toml");
    let base = ["--config", s(&config), "--run-dir", s(work.path())];

    let mut first = vec!["run"];
    first.extend(base);
    first.extend(["--stop-after", "fx-003:3"]);
    let out = sdgpb(&first);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["run"]["interrupted"], true);

    let mut resume = vec!["resume"];
    resume.extend(base);
    resume.push("--report");
    let out = sdgpb(&resume);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["run"]["interrupted"], false);
    assert_eq!(summary["run"]["live_calls"], 0);

    let svg = fs::read(work.path().join("report/figure1.svg")).unwrap();
    assert_eq!(
        svg,
        fs::read(fixtures().join("golden/figure1.svg")).unwrap()
    );
}

#[test]
fn report_without_results_exits_3() {
    let work = tempfile::tempdir().unwrap();
    let out = sdgpb(&["report", "--run-dir", s(work.path())]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_json(&out);
    assert_eq!(err["exit_code"], 3);
    assert!(!err["message"].as_str().unwrap().is_empty());
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "batch_cap = 0\n").unwrap();
    let out = sdgpb(&["--config", s(&path), "run", "--backend", "replay"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["exit_code"], 2);

    fs::write(&path, "no_such_key = 1\n").unwrap();
    let out = sdgpb(&["--config", s(&path), "ingest"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_stop_after_exits_2() {
    let work = tempfile::tempdir().unwrap();
    let config = fixtures().join("fixtures.toml");
    let out = sdgpb(&[
        "run",
        "--config",
        s(&config),
        "--run-dir",
        s(work.path()),
        "--stop-after",
        "fx-001:9",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_with_empty_cache_exits_4() {
    let work = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    let config = fixtures().join("fixtures.toml");
    let out = sdgpb(&[
        "run",
        "--config",
        s(&config),
        "--run-dir",
        s(work.path()),
        "--cache-dir",
        s(cache.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unknown_flag_is_rejected() {
    let out = sdgpb(&["run", "--no-such-flag"]);
    assert!(!out.status.success());
}
