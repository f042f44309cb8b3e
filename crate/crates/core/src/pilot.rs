//! Scripted operator used to produce the bundled command traces.
//!
//! Like a human at the console it acts once per MR frame and sees only the
//! frame, the known channel centerline and the stage readback. Every command
//! it issues is recorded, so the resulting trace replays headlessly.

use crate::environment::{point_along, project_onto_polyline, RegionRole};
use crate::error::SimError;
use crate::imaging::{localize_artifact, MRFrame};
use crate::scalar::Vec2;
use crate::scenario::ScenarioConfig;
use crate::sim::Simulation;
use crate::trace::{Command, CommandTrace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotParams {
    /// Aim point distance ahead along the centerline, m.
    pub lookahead: f64,
    /// Stop when the estimate is this close to a target, m.
    pub arrival_tolerance: f64,
    /// Smallest gradient fraction used while approaching a target.
    pub min_gradient_fraction: f64,
    /// Acoustic pressure requested for release, Pa.
    pub release_pressure: f64,
    /// Frames to keep the transducer on at each target.
    pub release_frames: u64,
    /// Stage readback must be this close to the aim point before firing, m.
    pub stage_tolerance: f64,
}

impl Default for PilotParams {
    fn default() -> Self {
        Self {
            lookahead: 1.2e-2,
            arrival_tolerance: 3.0e-3,
            min_gradient_fraction: 0.5,
            release_pressure: 1.4e6,
            release_frames: 25,
            stage_tolerance: 2.0e-4,
        }
    }
}

struct Pilot {
    sim: Simulation,
    trace: CommandTrace,
    params: PilotParams,
    centerline: Vec<Vec2<f64>>,
    /// Largest displacement of one full-gradient actuation window, m.
    window_reach: f64,
}

impl Pilot {
    fn new(config: ScenarioConfig, params: PilotParams) -> Result<Self, SimError> {
        let sim = Simulation::new(config)?;
        let centerline = sim
            .environment()
            .centerline
            .clone()
            .ok_or_else(|| SimError::Parse("the pilot needs a world with a centerline".into()))?;
        let cfg = sim.config();
        let drag = cfg.dynamics_params(cfg.capsule.drag_coefficient).drag;
        let window_reach = sim.moment() * cfg.sequence.max_gradient / drag * cfg.sequence.actuation_duration;
        Ok(Self { sim, trace: CommandTrace::default(), params, centerline, window_reach })
    }

    fn issue(&mut self, command: Command) -> Result<(), SimError> {
        let installed = self.sim.apply(&command)?;
        self.trace.push(self.sim.time(), installed.applied);
        Ok(())
    }

    /// Steps until the next frame, or `None` at the time limit.
    fn next_frame(&mut self) -> Result<Option<MRFrame>, SimError> {
        let limit = (self.sim.config().end.time_limit / self.sim.dt()).round() as u64;
        while self.sim.step_index() < limit {
            if let Some(f) = self.sim.step()?.frame {
                return Ok(Some(f));
            }
        }
        Ok(None)
    }

    fn locate(&self, frame: &MRFrame) -> Option<Vec2<f64>> {
        let img = &self.sim.imager().config;
        localize_artifact(frame, img.localize_threshold as f32, img.min_blob_pixels, img.artifact.artifact_radius)
            .ok()
            .map(|l| l.position)
    }

    /// Gradient that moves the capsule from `est` toward the centerline
    /// point `ahead` metres further on, covering at most `reach` this window.
    fn steer(&self, est: Vec2<f64>, stop_at: f64, reach: f64) -> Vec2<f64> {
        let (s, _) = project_onto_polyline(&self.centerline, est);
        let aim = point_along(&self.centerline, (s + self.params.lookahead).min(stop_at));
        let g_max = self.sim.config().sequence.max_gradient;
        let Some(dir) = (aim - est).normalized() else { return Vec2::zero() };
        let fraction = (reach / self.window_reach).clamp(self.params.min_gradient_fraction, 1.0);
        dir * (g_max * fraction)
    }
}

/// Drives the capsule along the centerline at full gradient until the goal
/// region is reached.
pub fn greedy_path(config: ScenarioConfig, params: PilotParams) -> Result<CommandTrace, SimError> {
    let mut pilot = Pilot::new(config, params)?;
    let end = crate::environment::polyline_length(&pilot.centerline);
    let mut last = Vec2::new(f64::NAN, f64::NAN);
    while pilot.sim.goal_reached().is_none() {
        let Some(frame) = pilot.next_frame()? else { break };
        if pilot.sim.goal_reached().is_some() {
            break;
        }
        let Some(est) = pilot.locate(&frame) else { continue };
        let g = pilot.steer(est, end + params.lookahead, f64::INFINITY);
        if g != last {
            pilot.issue(Command::SetGradient { gradient: g })?;
            last = g;
        }
    }
    if last != Vec2::zero() {
        pilot.issue(Command::SetGradient { gradient: Vec2::zero() })?;
    }
    Ok(pilot.trace)
}

enum Stage {
    Approach,
    Aim,
    Release { until: u64 },
}

/// Visits every target region in centerline order, stops on it, centres the
/// focus on the artifact and releases for a fixed number of frames.
pub fn four_targets(config: ScenarioConfig, params: PilotParams) -> Result<CommandTrace, SimError> {
    let mut pilot = Pilot::new(config, params)?;
    let mut targets: Vec<(f64, Vec2<f64>)> = pilot
        .sim
        .environment()
        .regions_with_role(RegionRole::Target)
        .map(|r| {
            let c = r.shape.anchor();
            (project_onto_polyline(&pilot.centerline, c).0, c)
        })
        .collect();
    targets.sort_by(|a, b| a.0.total_cmp(&b.0));
    let medium = pilot.sim.hifu().medium;
    let voltage = pilot.sim.hifu_config().voltage_for(params.release_pressure, medium);

    let mut k = 0;
    let mut stage = Stage::Approach;
    let mut est = pilot.sim.config().start_position(pilot.sim.environment());
    if let Some(&(_, c)) = targets.first() {
        pilot.issue(Command::MoveStage { target: c })?;
    }
    while k < targets.len() {
        let Some(frame) = pilot.next_frame()? else { break };
        if let Some(p) = pilot.locate(&frame) {
            est = p;
        }
        let (s_target, center) = targets[k];
        match stage {
            Stage::Approach => {
                let dist = est.distance(center);
                if dist <= params.arrival_tolerance {
                    pilot.issue(Command::SetGradient { gradient: Vec2::zero() })?;
                    stage = Stage::Aim;
                } else {
                    let g = pilot.steer(est, s_target, dist);
                    pilot.issue(Command::SetGradient { gradient: g })?;
                }
            }
            Stage::Aim => {
                if pilot.sim.stage_target() != est {
                    pilot.issue(Command::MoveStage { target: est })?;
                }
                if pilot.sim.hifu().focus_position.distance(est) <= params.stage_tolerance {
                    pilot.issue(Command::SetHifu { drive_voltage: voltage, enabled: true, medium: Some(medium) })?;
                    stage = Stage::Release { until: frame.sequence_index + params.release_frames };
                }
            }
            Stage::Release { until } => {
                if frame.sequence_index >= until {
                    pilot.issue(Command::SetHifu { drive_voltage: 0.0, enabled: false, medium: Some(medium) })?;
                    k += 1;
                    if let Some(&(_, c)) = targets.get(k) {
                        pilot.issue(Command::MoveStage { target: c })?;
                    }
                    stage = Stage::Approach;
                }
            }
        }
    }
    Ok(pilot.trace)
}

/// Bundled trace generators by name.
pub fn generate(name: &str, config: ScenarioConfig) -> Option<Result<CommandTrace, SimError>> {
    match name {
        "greedy_path" => Some(greedy_path(config, PilotParams::default())),
        "four_targets" => Some(four_targets(config, PilotParams::default())),
        _ => None,
    }
}

/// Scenario each bundled trace was generated against.
pub fn scenario_for(trace_name: &str) -> Option<&'static str> {
    match trace_name {
        "greedy_path" => Some("spiral_intestine"),
        "four_targets" => Some("u_channel"),
        _ => None,
    }
}
