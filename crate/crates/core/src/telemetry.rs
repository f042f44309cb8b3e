//! Run log records, written one JSON object per line.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::hifu::HifuState;
use crate::scalar::Vec2;
use crate::sequence::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub phase: Phase,
    pub position: Vec2<f64>,
    pub velocity: Vec2<f64>,
    /// Latest operator command, T/m.
    pub commanded_gradient: Vec2<f64>,
    /// Gradient held for the current actuation window (zero while imaging).
    pub applied_gradient: Vec2<f64>,
    pub hifu: HifuState<f64>,
    /// Pa
    pub local_pressure: f64,
    pub bubble_intact: bool,
    pub drug_remaining: f64,
    pub cumulative_released: f64,
    /// Distance travelled by the capsule centre, m.
    pub path_length: f64,
    /// Arc length along the centerline, when the world has one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub progress: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SimEvent {
    BubbleRemoved { pressure: f64, threshold: f64 },
    TargetEntered { region: String },
    GoalReached { region: String },
    DrugEmptied { remaining: f64 },
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    #[serde(flatten)]
    pub event: SimEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionVolume {
    pub region: String,
    /// m³
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub t: f64,
    pub regions: Vec<RegionVolume>,
    /// Everything in the dye field, m³.
    pub total_dye: f64,
    pub cumulative_released: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    GoalReached,
    DrugEmpty,
    TimeLimit,
    /// Stopped by the caller (end of a live session).
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndRecord {
    pub t: f64,
    pub reason: EndReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TelemetryRecord {
    Step(StepRecord),
    Event(EventRecord),
    Delivery(DeliveryRecord),
    End(EndRecord),
}

impl TelemetryRecord {
    pub fn time(&self) -> f64 {
        match self {
            TelemetryRecord::Step(r) => r.t,
            TelemetryRecord::Event(r) => r.t,
            TelemetryRecord::Delivery(r) => r.t,
            TelemetryRecord::End(r) => r.t,
        }
    }
}

pub fn write_ndjson<W: Write>(records: &[TelemetryRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_ndjson(records: &[TelemetryRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_ndjson(records, &mut out).expect("writing to memory");
    out
}

pub fn read_ndjson(text: &str) -> Result<Vec<TelemetryRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
