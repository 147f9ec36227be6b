use std::path::Path;
use std::process::{Command, Output};

fn radseg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radseg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = radseg(args, cwd);
    assert!(out.status.success(), "radseg {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    assert!(v["message"].is_string());
    v["error"].as_str().unwrap().to_string()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn help_and_version_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    for flag in ["--help", "--version"] {
        let out = ok(&[flag], tmp.path());
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["pipeline"], &["optimize", "d", "--stage", "stage9"]] {
        let out = radseg(args, tmp.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(error_kind(&out), "usage");
    }
}

#[test]
fn runtime_errors_exit_1_with_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    let out = radseg(&["simulate", "no-such-scene"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "invalid_input");

    let out = radseg(&["pipeline", "missing-dir"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "invalid_input");

    std::fs::create_dir(cwd.join("garbled")).unwrap();
    std::fs::write(cwd.join("garbled/detections.csv"), "time,range\nsoon,far\n").unwrap();
    let out = radseg(&["pipeline", "garbled"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "parse");

    std::fs::write(cwd.join("bad.toml"), "[stage1]\neps_q = 1.0\n").unwrap();
    let out = radseg(&["--config", "bad.toml", "simulate", "remote-car"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "config");

    let out = radseg(&["bench", "--experiments", "14"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "unknown_experiment");
}

#[test]
fn disabled_merge_writes_stage1_as_final() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    ok(&["simulate", "crossing-pedestrian", "--out", "data"], cwd);
    std::fs::write(cwd.join("nomerge.toml"), "[merge]\nenabled = false\n").unwrap();
    ok(&["--config", "nomerge.toml", "pipeline", "data", "--out", "run"], cwd);
    let run = cwd.join("run");
    assert!(!run.join("stage2.csv").exists());
    assert_eq!(read(&run.join("assignments.csv")), read(&run.join("stage1.csv")));
    let summary: serde_json::Value = serde_json::from_str(&read(&run.join("summary.json"))).unwrap();
    assert!(summary["stage2"].is_null());
}

#[test]
fn staged_commands_match_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    ok(&["simulate", "occluded-vehicle", "--out", "data"], cwd);
    ok(&["pipeline", "data", "--out", "full"], cwd);
    ok(&["cluster", "data", "--out", "s1"], cwd);
    ok(&["merge", "data", "--assignments", "s1/assignments.csv", "--out", "s2"], cwd);
    assert_eq!(read(&cwd.join("s1/assignments.csv")), read(&cwd.join("full/stage1.csv")));
    assert_eq!(read(&cwd.join("s2/assignments.csv")), read(&cwd.join("full/stage2.csv")));

    let scored = ok(&["score", "data", "--assignments", "s2/assignments.csv"], cwd);
    assert_eq!(String::from_utf8(scored.stdout).unwrap(), read(&cwd.join("full/scores_stage2.csv")));
    let scored = ok(&["score", "data", "--assignments", "s2/assignments.csv", "--json"], cwd);
    let v: serde_json::Value = serde_json::from_slice(&scored.stdout).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&read(&cwd.join("full/summary.json"))).unwrap();
    assert_eq!(v["aggregate"], summary["stage2"]);
}

#[test]
fn merge_rejects_misaligned_windows() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    ok(&["simulate", "crossing-pedestrian", "--out", "data"], cwd);
    ok(&["cluster", "data", "--out", "s1"], cwd);
    std::fs::write(cwd.join("wide.toml"), "[stage1]\neps_t = 0.5\n").unwrap();
    let out = radseg(&["--config", "wide.toml", "merge", "data", "--assignments", "s1/assignments.csv"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "invalid_input");
}

#[test]
fn filter_splits_the_log() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    ok(&["simulate", "cluttered-walker", "--out", "data"], cwd);
    ok(&["filter", "data", "--out", "f"], cwd);
    let lines = |p: &str| read(&cwd.join(p)).lines().count() - 1;
    assert_eq!(lines("f/kept.csv") + lines("f/removed.csv"), lines("data/detections.csv"));
    assert!(lines("f/removed.csv") > 0);
}

#[test]
fn optimize_writes_full_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    ok(&["simulate", "crossing-pedestrian", "--out", "data"], cwd);
    ok(&["optimize", "data", "--explore", "4", "--exploit", "4", "--out", "opt"], cwd);
    assert_eq!(read(&cwd.join("opt/trace.csv")).lines().count(), 9);
    let best: serde_json::Value = serde_json::from_str(&read(&cwd.join("opt/best.json"))).unwrap();
    assert!(best.is_object());
}
