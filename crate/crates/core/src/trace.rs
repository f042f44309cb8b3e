//! Timestamped operator commands, replayable headlessly.

use serde::{Deserialize, Serialize};

use crate::error::{SimError, ValidationError};
use crate::hifu::Medium;
use crate::scalar::Vec2;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

const BUNDLED: [(&str, &str); 2] = [
    ("greedy_path", include_str!("../traces/greedy_path.json")),
    ("four_targets", include_str!("../traces/four_targets.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    /// Desired gradient, T/m. Clamped to the sequence maximum.
    SetGradient { gradient: Vec2<f64> },
    SetHifu {
        drive_voltage: f64,
        enabled: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        medium: Option<Medium>,
    },
    /// New stage target for the focus, m.
    MoveStage { target: Vec2<f64> },
    Pause,
    Resume,
    /// Restores the scenario's initial world; the clock keeps running.
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedCommand {
    /// Simulation time, s. Takes effect at the first step starting at or after it.
    pub time: f64,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandTrace {
    pub schema_version: u32,
    pub commands: Vec<TimedCommand>,
}

impl Default for CommandTrace {
    fn default() -> Self {
        Self { schema_version: TRACE_SCHEMA_VERSION, commands: Vec::new() }
    }
}

impl CommandTrace {
    pub fn new(commands: Vec<TimedCommand>) -> Self {
        Self { schema_version: TRACE_SCHEMA_VERSION, commands }
    }

    pub fn push(&mut self, time: f64, command: Command) {
        self.commands.push(TimedCommand { time, command });
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.schema_version != TRACE_SCHEMA_VERSION {
            return Err(ValidationError::new("trace.schema_version", format!("must be {TRACE_SCHEMA_VERSION}")));
        }
        let mut last = 0.0;
        for (i, c) in self.commands.iter().enumerate() {
            if !(c.time >= last) || !c.time.is_finite() {
                return Err(ValidationError::new(format!("trace.commands[{i}].time"), "must be >= 0 and sorted"));
            }
            last = c.time;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let trace: Self = serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        trace.validate()?;
        Ok(trace)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Index of the first step of length `dt` that a command at `time` affects.
pub fn effective_step(time: f64, dt: f64) -> u64 {
    (time / dt - 1e-9).ceil().max(0.0) as u64
}

pub fn bundled_trace_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_trace(name: &str) -> Option<CommandTrace> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| CommandTrace::from_json(s).expect("bundled traces are valid"))
}
