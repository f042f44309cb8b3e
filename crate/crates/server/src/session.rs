//! One live simulation driven by operator commands and wall-clock ticks.
//!
//! The session does no I/O: the network layer feeds it requests and
//! elapsed wall time and delivers whatever it returns.

use capsule_twin_core::headless::{collect, end_reason, finish, step_limit};
use capsule_twin_core::hifu::focal_pressure;
use capsule_twin_core::imaging::localize_artifact;
use capsule_twin_core::metrics::compute_metrics;
use capsule_twin_core::scenario::{bundled_scenario, load_scenario, ScenarioConfig};
use capsule_twin_core::sim::Simulation;
use capsule_twin_core::telemetry::{EndReason, TelemetryRecord};
use capsule_twin_core::trace::{Command, CommandTrace};
use capsule_twin_core::{SimError, Vec2};

use crate::protocol::{
    Ack, ErrorCode, ErrorPayload, FramePayload, Request, ServerMessage, SessionInfo, StatePayload, Truth, PROTOCOL_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionOptions {
    /// Simulated seconds per wall second.
    pub time_scale: f64,
    /// Whether clients may ask for ground truth in `state`.
    pub allow_debug: bool,
    /// Upper bound on steps taken in one tick, so a huge time scale cannot stall I/O.
    pub max_steps_per_tick: u64,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self { time_scale: 1.0, allow_debug: false, max_steps_per_tick: 200_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Audience {
    /// Only the client whose request produced the message.
    Requester,
    /// Every connected client.
    All,
}

/// A message produced by the session, stamped with the simulation time at
/// which it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub audience: Audience,
    pub t: f64,
    pub message: ServerMessage,
}

pub struct Session {
    id: String,
    options: SessionOptions,
    sim: Simulation,
    limit: u64,
    paused: bool,
    ended: Option<EndReason>,
    /// Fractional steps owed to the wall clock.
    owed: f64,
    telemetry: Vec<TelemetryRecord>,
    trace: CommandTrace,
    artifact: Option<Vec2>,
}

fn sim_error(e: &SimError, seq: u64) -> ErrorPayload {
    let code = match e.root() {
        SimError::OutOfBounds(_) => ErrorCode::OutOfBounds,
        SimError::IncompleteRun { .. } => ErrorCode::IncompleteRun,
        _ => ErrorCode::Validation,
    };
    ErrorPayload::new(code, e.to_string()).reply_to(seq)
}

impl Session {
    pub fn new(id: impl Into<String>, config: ScenarioConfig, options: SessionOptions) -> Result<Self, SimError> {
        let sim = Simulation::new(config)?;
        Ok(Self {
            id: id.into(),
            options,
            limit: step_limit(sim.config()),
            telemetry: vec![TelemetryRecord::Step(sim.record())],
            sim,
            paused: false,
            ended: None,
            owed: 0.0,
            trace: CommandTrace::default(),
            artifact: None,
        })
    }

    fn reply(&self, message: ServerMessage) -> Outbound {
        Outbound { audience: Audience::Requester, t: self.sim.time(), message }
    }

    fn broadcast(&self, message: ServerMessage) -> Outbound {
        Outbound { audience: Audience::All, t: self.sim.time(), message }
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn time(&self) -> f64 {
        self.sim.time()
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn ended(&self) -> Option<EndReason> {
        self.ended
    }

    /// Everything the session has logged, in headless order.
    pub fn telemetry(&self) -> &[TelemetryRecord] {
        &self.telemetry
    }

    /// Accepted commands, stamped with the simulation time they took effect.
    pub fn trace(&self) -> &CommandTrace {
        &self.trace
    }

    pub fn info(&self, debug: bool) -> SessionInfo {
        let cfg = self.sim.config();
        SessionInfo {
            schema_version: PROTOCOL_VERSION,
            session_id: self.id.clone(),
            scenario: cfg.name.clone(),
            timestep: cfg.timestep,
            image_duration: cfg.sequence.image_duration,
            cycle_duration: cfg.sequence.cycle_duration(),
            max_gradient: cfg.sequence.max_gradient,
            stage_bounds: self.sim.hifu_config().stage_bounds.expect("resolved by the simulation"),
            field_of_view: self.sim.imager().field_of_view,
            frame_width: cfg.imaging.width,
            frame_height: cfg.imaging.height,
            time_scale: self.options.time_scale,
            debug: debug && self.options.allow_debug,
        }
    }

    /// Current state with ground truth attached; strip it with
    /// [`StatePayload::truth`] = `None` for non-debug clients.
    pub fn state(&self) -> StatePayload {
        let r = self.sim.record();
        StatePayload {
            t: r.t,
            phase: r.phase,
            paused: self.paused,
            ended: self.ended,
            time_scale: self.options.time_scale,
            commanded_gradient: r.commanded_gradient,
            hifu: r.hifu,
            focal_pressure: focal_pressure(&r.hifu, self.sim.hifu_config()),
            stage_target: self.sim.stage_target(),
            bubble_intact: r.bubble_intact,
            drug_remaining: r.drug_remaining,
            cumulative_released: r.cumulative_released,
            artifact: self.artifact,
            truth: Some(Truth { position: r.position, velocity: r.velocity, local_pressure: r.local_pressure }),
        }
    }

    /// Handles one parsed client request. `seq` and `client_t` come from its envelope.
    /// `debug` is what the client asked for in its hello.
    pub fn handle(&mut self, request: Request, seq: u64, client_t: f64, debug: bool) -> Vec<Outbound> {
        let kind = request.kind();
        let command = match request {
            Request::Hello(h) => {
                if h.schema_version != PROTOCOL_VERSION {
                    let msg = format!("server speaks schema_version {PROTOCOL_VERSION}, client sent {}", h.schema_version);
                    return vec![self.reply(ServerMessage::Error(ErrorPayload::new(ErrorCode::SchemaMismatch, msg).reply_to(seq)))];
                }
                return vec![self.reply(ServerMessage::Hello(self.info(h.debug)))];
            }
            Request::Metrics => {
                let reply = match compute_metrics(&self.telemetry_with_end(), self.sim.config()) {
                    Ok(m) => ServerMessage::Metrics(Box::new(m)),
                    Err(e) => ServerMessage::Error(sim_error(&e, seq)),
                };
                return vec![self.reply(reply)];
            }
            Request::GetTrace => return vec![self.reply(ServerMessage::Trace(self.trace.clone()))],
            Request::LoadScenario(req) => {
                let config = match (req.name, req.toml) {
                    (Some(name), None) => match bundled_scenario(&name) {
                        Some(c) => Ok(c),
                        None => {
                            let e = ErrorPayload::new(ErrorCode::UnknownScenario, format!("no bundled scenario `{name}`"));
                            return vec![self.reply(ServerMessage::Error(e.reply_to(seq)))];
                        }
                    },
                    (None, Some(doc)) => load_scenario(&doc),
                    _ => {
                        let e = ErrorPayload::new(ErrorCode::InvalidPayload, "give exactly one of `name` and `toml`");
                        return vec![self.reply(ServerMessage::Error(e.reply_to(seq)))];
                    }
                };
                return match config.and_then(|c| Session::new(self.id.clone(), c, self.options)) {
                    Ok(fresh) => {
                        *self = fresh;
                        let info = serde_json::to_value(self.info(debug)).expect("info serializes");
                        let ack = Ack { in_reply_to: seq, accepted: true, clamped: false, applied: info, effective_time: 0.0, client_t };
                        vec![
                            self.reply(ServerMessage::Ack { kind, ack }),
                            self.broadcast(ServerMessage::State(self.state())),
                        ]
                    }
                    Err(e) => vec![self.reply(ServerMessage::Error(sim_error(&e, seq)))],
                };
            }
            Request::SetGradient(r) => Command::SetGradient { gradient: r.gradient },
            Request::SetHifu(r) => Command::SetHifu { drive_voltage: r.drive_voltage, enabled: r.enabled, medium: r.medium },
            Request::MoveStage(r) => Command::MoveStage { target: r.target },
            Request::Pause => Command::Pause,
            Request::Resume => Command::Resume,
            Request::Reset => Command::Reset,
        };
        if self.ended.is_some() {
            let e = ErrorPayload::new(ErrorCode::SessionEnded, "the run has ended; load a scenario to start again");
            return vec![self.reply(ServerMessage::Error(e.reply_to(seq)))];
        }
        let installed = match self.sim.apply(&command) {
            Ok(i) => i,
            Err(e) => return vec![self.reply(ServerMessage::Error(sim_error(&e, seq)))],
        };
        let t = self.sim.time();
        self.trace.push(t, installed.applied);
        match command {
            Command::Pause => self.paused = true,
            Command::Resume => self.paused = false,
            Command::Reset => self.artifact = None,
            _ => {}
        }
        let applied = serde_json::to_value(installed.applied).expect("commands serialize");
        let ack = Ack { in_reply_to: seq, accepted: true, clamped: installed.clamped, applied, effective_time: t, client_t };
        vec![self.reply(ServerMessage::Ack { kind, ack })]
    }

    /// Advances by `wall_dt` seconds of wall time and returns what happened,
    /// always ending with one `state` message.
    pub fn tick(&mut self, wall_dt: f64) -> Vec<Outbound> {
        let mut out = Vec::new();
        if self.ended.is_none() && !self.paused {
            self.owed += wall_dt.max(0.0) * self.options.time_scale / self.sim.dt();
            let n = ((self.owed + 1e-9).floor() as u64).min(self.options.max_steps_per_tick);
            self.owed = (self.owed - n as f64).max(0.0);
            for _ in 0..n {
                if self.advance(&mut out) {
                    break;
                }
            }
        }
        out.push(self.broadcast(ServerMessage::State(self.state())));
        out
    }

    /// Takes one step, or ends the run. Returns true once ended.
    fn advance(&mut self, out: &mut Vec<Outbound>) -> bool {
        if let Some(reason) = end_reason(&self.sim, self.limit) {
            self.end(reason, out);
            return true;
        }
        let step = match self.sim.step() {
            Ok(s) => s,
            Err(e) => {
                out.push(self.broadcast(ServerMessage::Error(ErrorPayload::new(ErrorCode::Validation, e.to_string()))));
                self.end(EndReason::Stopped, out);
                return true;
            }
        };
        for e in &step.events {
            out.push(self.broadcast(ServerMessage::Event(e.clone())));
        }
        if let Some(frame) = &step.frame {
            let ic = &self.sim.imager().config;
            self.artifact = localize_artifact(frame, ic.localize_threshold as f32, ic.min_blob_pixels, ic.artifact.artifact_radius)
                .ok()
                .map(|l| l.position);
            out.push(self.broadcast(ServerMessage::Frame(FramePayload::from_frame(frame))));
        }
        collect(step, &mut self.telemetry, None);
        false
    }

    fn end(&mut self, reason: EndReason, out: &mut Vec<Outbound>) {
        self.ended = Some(reason);
        finish(&self.sim, &mut self.telemetry, reason);
        let msg = match compute_metrics(&self.telemetry, self.sim.config()) {
            Ok(m) => ServerMessage::Metrics(Box::new(m)),
            Err(e) => ServerMessage::Error(ErrorPayload::new(ErrorCode::IncompleteRun, e.to_string())),
        };
        out.push(self.broadcast(msg));
    }

    /// Stops a running session (operator quit), logging the end record.
    pub fn stop(&mut self) -> Vec<Outbound> {
        let mut out = Vec::new();
        if self.ended.is_none() {
            self.end(EndReason::Stopped, &mut out);
        }
        out
    }

    fn telemetry_with_end(&self) -> Vec<TelemetryRecord> {
        let mut t = self.telemetry.clone();
        if self.ended.is_none() {
            finish(&self.sim, &mut t, EndReason::Stopped);
        }
        t
    }
}
