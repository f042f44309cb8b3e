use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capsule-twin")).args(args).current_dir(dir).output().unwrap()
}

fn metrics(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap()
}

#[test]
fn four_targets_replay_delivers_to_all_targets() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(&["run", "--scenario", "u_channel", "--trace", "four_targets", "--out", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = metrics(&tmp.path().join("o"));
    assert_eq!(m["targets_delivered"], 4);
    for f in ["telemetry.ndjson", "trace.json", "scenario.toml", "dye.csv"] {
        assert!(tmp.path().join("o").join(f).exists(), "{f} missing");
    }
}

#[test]
fn open_pool_without_trace_does_not_move() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(&["run", "--scenario", "open_pool", "--out", "o", "--frames"], tmp.path());
    assert!(out.status.success());
    assert_eq!(metrics(&tmp.path().join("o"))["path_length"], 0.0);
    assert_eq!(std::fs::read_dir(tmp.path().join("o/frames")).unwrap().count(), 20);
}

#[test]
fn exit_codes_are_stable() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "schema_version = 1\nname = \"bad\"\ntimestep = -1.0\n").unwrap();
    let bad = cli(&["run", "--scenario", "bad.toml", "--out", "o"], tmp.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("timestep"));
    assert_eq!(cli(&["run", "--scenario", "nope.toml", "--out", "o"], tmp.path()).status.code(), Some(4));
    assert_eq!(cli(&["run", "--scenario", "spiral_intestine", "--out", "o"], tmp.path()).status.code(), Some(3));
    std::fs::write(tmp.path().join("t.json"), r#"{"schema_version":1,"commands":[{"time":2.0,"type":"pause"},{"time":1.0,"type":"resume"}]}"#).unwrap();
    assert_eq!(cli(&["run", "--trace", "t.json", "--out", "o"], tmp.path()).status.code(), Some(2));
}

#[test]
fn runs_are_deterministic_and_seed_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    for (dir, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        let out = cli(&["run", "--scenario", "open_pool", "--seed", seed, "--out", dir, "--frames"], tmp.path());
        assert!(out.status.success());
    }
    let read = |d: &str, f: &str| std::fs::read(tmp.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "telemetry.ndjson"), read("b", "telemetry.ndjson"));
    assert_eq!(read("a", "frames/frame_00003.png"), read("b", "frames/frame_00003.png"));
    assert_ne!(read("a", "frames/frame_00003.png"), read("c", "frames/frame_00003.png"));
    assert!(String::from_utf8(read("c", "scenario.toml")).unwrap().contains("seed = 8"));
}

#[test]
fn characterization_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(&["characterize", "pressure_sweep"], tmp.path());
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 47);
    assert!(csv.lines().last().unwrap().starts_with("100.0,2400000.0,"));

    let out = cli(&["run", "--characterize", "emptying_curve", "--out", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(tmp.path().join("o/emptying_curve.csv")).unwrap();
    let durations: Vec<f64> = table.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    for (d, want) in durations.iter().zip([158.0, 38.0, 20.0]) {
        assert!((d - want).abs() <= 1e-3 + 1e-9, "{d} vs {want}");
    }
    assert_eq!(cli(&["characterize", "bogus"], tmp.path()).status.code(), Some(2));
}
