use capsule_twin_core::headless::{run_headless, RunOptions};
use capsule_twin_core::metrics::compute_metrics;
use capsule_twin_core::pilot;
use capsule_twin_core::scenario::{bundled_scenario, bundled_scenario_names, load_scenario};
use capsule_twin_core::telemetry::{read_ndjson, to_ndjson, EndReason, SimEvent, TelemetryRecord};
use capsule_twin_core::trace::{bundled_trace, bundled_trace_names, Command, CommandTrace};
use capsule_twin_core::{SimError, Vec2};

#[test]
fn bundled_traces_regenerate_exactly() {
    for name in bundled_trace_names() {
        let cfg = bundled_scenario(pilot::scenario_for(name).unwrap()).unwrap();
        let fresh = pilot::generate(name, cfg).unwrap().unwrap();
        assert_eq!(fresh, bundled_trace(name).unwrap(), "{name} drifted from the pilot");
    }
}

#[test]
fn bundled_scenarios_load_and_round_trip() {
    for name in bundled_scenario_names() {
        let cfg = bundled_scenario(name).unwrap();
        cfg.validate().unwrap();
        let again = load_scenario(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }
}

#[test]
fn unknown_scenario_field_is_rejected() {
    let err = load_scenario("schema_version = 1\nname = \"x\"\nbogus = 3\n").unwrap_err();
    assert!(matches!(err, SimError::Parse(_)), "{err:?}");
    let err = load_scenario("schema_version = 2\nname = \"x\"\n").unwrap_err();
    assert!(err.to_string().contains("schema_version"), "{err}");
}

#[test]
fn greedy_run_reaches_goal_and_telemetry_round_trips() {
    let cfg = bundled_scenario("spiral_intestine").unwrap();
    let run = run_headless(&cfg, &bundled_trace("greedy_path").unwrap(), RunOptions::default()).unwrap();
    assert_eq!(run.end, EndReason::GoalReached);
    let bytes = to_ndjson(&run.telemetry);
    let back = read_ndjson(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(back, run.telemetry);
    let m = compute_metrics(&back, &cfg).unwrap();
    assert!(m.navigation_time.unwrap() > 0.0);
    assert!(back.iter().any(|r| matches!(r, TelemetryRecord::Event(e) if matches!(e.event, SimEvent::GoalReached { .. }))));
}

#[test]
fn run_without_goal_is_incomplete() {
    let mut cfg = bundled_scenario("spiral_intestine").unwrap();
    cfg.end.time_limit = 2.0;
    let run = run_headless(&cfg, &CommandTrace::default(), RunOptions::default()).unwrap();
    assert_eq!(run.end, EndReason::TimeLimit);
    assert!(matches!(run.metrics(), Err(SimError::IncompleteRun { .. })));
}

#[test]
fn out_of_range_stage_command_fails_the_run() {
    let cfg = bundled_scenario("open_pool").unwrap();
    let mut trace = CommandTrace::default();
    trace.push(1.5, Command::MoveStage { target: Vec2::new(5.0, 0.0) });
    let err = run_headless(&cfg, &trace, RunOptions::default()).unwrap_err();
    assert!(matches!(err.root(), SimError::OutOfBounds(_)), "{err:?}");
}

#[test]
fn pause_and_resume_do_not_change_a_headless_run() {
    let cfg = bundled_scenario("open_pool").unwrap();
    let mut plain = CommandTrace::default();
    plain.push(0.0, Command::SetGradient { gradient: Vec2::new(0.06, 0.0) });
    let mut paused = plain.clone();
    paused.push(0.5, Command::Pause);
    paused.push(0.7, Command::Resume);
    let a = run_headless(&cfg, &plain, RunOptions::default()).unwrap();
    let b = run_headless(&cfg, &paused, RunOptions::default()).unwrap();
    assert_eq!(to_ndjson(&a.telemetry), to_ndjson(&b.telemetry));
}
