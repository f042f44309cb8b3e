//! Batch runs: a scenario plus a command trace, stepped to an end condition.

use crate::dye::DyeField;
use crate::error::SimError;
use crate::imaging::MRFrame;
use crate::metrics::{compute_metrics, MetricsReport};
use crate::scenario::ScenarioConfig;
use crate::sim::{Simulation, StepOutput};
use crate::telemetry::{EndReason, EndRecord, TelemetryRecord};
use crate::trace::{effective_step, CommandTrace};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub keep_frames: bool,
    /// Simulated seconds per wall second; `None` runs as fast as possible.
    pub time_scale: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HeadlessRun {
    pub config: ScenarioConfig,
    pub telemetry: Vec<TelemetryRecord>,
    pub frames: Vec<MRFrame>,
    pub end: EndReason,
    /// Dye field at the end of the run.
    pub dye: DyeField<f64>,
}

impl HeadlessRun {
    pub fn metrics(&self) -> Result<MetricsReport, SimError> {
        compute_metrics(&self.telemetry, &self.config)
    }
}

/// Appends everything a step produced, in a fixed order.
pub fn collect(out: StepOutput, telemetry: &mut Vec<TelemetryRecord>, frames: Option<&mut Vec<MRFrame>>) {
    telemetry.extend(out.events.into_iter().map(TelemetryRecord::Event));
    if let Some(r) = out.record {
        telemetry.push(TelemetryRecord::Step(r));
    }
    if let Some(d) = out.delivery {
        telemetry.push(TelemetryRecord::Delivery(d));
    }
    if let (Some(frames), Some(f)) = (frames, out.frame) {
        frames.push(f);
    }
}

/// Closing records: final state and delivery (unless just written) and the end marker.
pub fn finish(sim: &Simulation, telemetry: &mut Vec<TelemetryRecord>, reason: EndReason) {
    let t = sim.time();
    let last_step = telemetry.iter().rev().find_map(|r| match r {
        TelemetryRecord::Step(s) => Some(s.t),
        _ => None,
    });
    if last_step != Some(t) {
        telemetry.push(TelemetryRecord::Step(sim.record()));
    }
    let last_delivery = telemetry.iter().rev().find_map(|r| match r {
        TelemetryRecord::Delivery(d) => Some(d.t),
        _ => None,
    });
    if last_delivery != Some(t) {
        telemetry.push(TelemetryRecord::Delivery(sim.delivery()));
    }
    telemetry.push(TelemetryRecord::End(EndRecord { t, reason }));
}

/// Index of the step at which the time limit ends a run.
pub fn step_limit(config: &ScenarioConfig) -> u64 {
    (config.end.time_limit / config.timestep - 1e-9).ceil() as u64
}

/// The configured end condition met by `sim`, checked between steps.
pub fn end_reason(sim: &Simulation, limit: u64) -> Option<EndReason> {
    let end = &sim.config().end;
    if end.on_goal && sim.goal_reached().is_some() {
        Some(EndReason::GoalReached)
    } else if end.on_drug_empty && sim.drug_emptied() {
        Some(EndReason::DrugEmpty)
    } else if sim.step_index() >= limit {
        Some(EndReason::TimeLimit)
    } else {
        None
    }
}

pub fn run_headless(config: &ScenarioConfig, trace: &CommandTrace, options: RunOptions) -> Result<HeadlessRun, SimError> {
    trace.validate()?;
    let mut sim = Simulation::new(config.clone())?;
    let dt = sim.dt();
    let limit = step_limit(config);
    let mut telemetry = vec![TelemetryRecord::Step(sim.record())];
    let mut frames = Vec::new();
    let mut next = 0;
    let started = std::time::Instant::now();
    let end = loop {
        while let Some(c) = trace.commands.get(next) {
            if effective_step(c.time, dt) > sim.step_index() {
                break;
            }
            sim.apply(&c.command).map_err(|e| e.at(sim.time()))?;
            next += 1;
        }
        if let Some(reason) = end_reason(&sim, limit) {
            break reason;
        }
        let out = sim.step()?;
        if let Some(scale) = options.time_scale {
            if out.frame.is_some() {
                let due = started.elapsed().as_secs_f64() * scale;
                if sim.time() > due {
                    std::thread::sleep(std::time::Duration::from_secs_f64((sim.time() - due) / scale));
                }
            }
        }
        collect(out, &mut telemetry, options.keep_frames.then_some(&mut frames));
    };
    finish(&sim, &mut telemetry, end);
    Ok(HeadlessRun { config: config.clone(), telemetry, frames, end, dye: sim.dye().clone() })
}
