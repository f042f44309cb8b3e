//! Wire format: one JSON object per line, `{"type", "seq", "t", "payload"}`.

use base64::Engine;
use capsule_twin_core::geometry::Rect;
use capsule_twin_core::hifu::{HifuState, Medium};
use capsule_twin_core::imaging::MRFrame;
use capsule_twin_core::metrics::MetricsReport;
use capsule_twin_core::sequence::Phase;
use capsule_twin_core::telemetry::{EndReason, EventRecord};
use capsule_twin_core::trace::CommandTrace;
use capsule_twin_core::Vec2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

/// Envelope as read off the wire, before the payload is interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMessage {
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    pub t: f64,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HelloRequest {
    pub schema_version: u32,
    /// Ask for ground-truth fields in `state`; granted only if the server allows it.
    #[serde(default)]
    pub debug: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadScenarioRequest {
    /// A bundled scenario name.
    #[serde(default)]
    pub name: Option<String>,
    /// A full scenario document.
    #[serde(default)]
    pub toml: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetGradientRequest {
    pub gradient: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetHifuRequest {
    pub drive_voltage: f64,
    pub enabled: bool,
    #[serde(default)]
    pub medium: Option<Medium>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveStageRequest {
    pub target: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Empty {}

/// Client to server messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Hello(HelloRequest),
    LoadScenario(LoadScenarioRequest),
    SetGradient(SetGradientRequest),
    SetHifu(SetHifuRequest),
    MoveStage(MoveStageRequest),
    Pause,
    Resume,
    Reset,
    Metrics,
    GetTrace,
}

impl Request {
    pub fn kind(&self) -> &'static str {
        match self {
            Request::Hello(_) => "hello",
            Request::LoadScenario(_) => "load_scenario",
            Request::SetGradient(_) => "set_gradient",
            Request::SetHifu(_) => "set_hifu",
            Request::MoveStage(_) => "move_stage",
            Request::Pause => "pause",
            Request::Resume => "resume",
            Request::Reset => "reset",
            Request::Metrics => "metrics",
            Request::GetTrace => "get_trace",
        }
    }

    /// Interprets the payload of a raw message.
    pub fn parse(raw: &RawMessage) -> Result<Self, ErrorPayload> {
        fn payload<T: serde::de::DeserializeOwned>(raw: &RawMessage) -> Result<T, ErrorPayload> {
            let v = if raw.payload.is_null() { Value::Object(Default::default()) } else { raw.payload.clone() };
            serde_json::from_value(v).map_err(|e| ErrorPayload::new(ErrorCode::InvalidPayload, e.to_string()).reply_to(raw.seq))
        }
        Ok(match raw.kind.as_str() {
            "hello" => Request::Hello(payload(raw)?),
            "load_scenario" => Request::LoadScenario(payload(raw)?),
            "set_gradient" => Request::SetGradient(payload(raw)?),
            "set_hifu" => Request::SetHifu(payload(raw)?),
            "move_stage" => Request::MoveStage(payload(raw)?),
            "pause" => payload::<Empty>(raw).map(|_| Request::Pause)?,
            "resume" => payload::<Empty>(raw).map(|_| Request::Resume)?,
            "reset" => payload::<Empty>(raw).map(|_| Request::Reset)?,
            "metrics" => payload::<Empty>(raw).map(|_| Request::Metrics)?,
            "get_trace" => payload::<Empty>(raw).map(|_| Request::GetTrace)?,
            other => {
                return Err(ErrorPayload::new(ErrorCode::UnknownType, format!("unknown message type `{other}`")).reply_to(raw.seq))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// The line is not a JSON envelope.
    BadMessage,
    UnknownType,
    InvalidPayload,
    /// `seq` did not increase.
    Sequence,
    HandshakeRequired,
    SchemaMismatch,
    Validation,
    OutOfBounds,
    UnknownScenario,
    IncompleteRun,
    SessionEnded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    /// `seq` of the offending client message, when it could be read.
    pub in_reply_to: Option<u64>,
    pub code: ErrorCode,
    pub message: String,
}

impl ErrorPayload {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { in_reply_to: None, code, message: message.into() }
    }

    pub fn reply_to(mut self, seq: u64) -> Self {
        self.in_reply_to = Some(seq);
        self
    }
}

/// Static facts about the loaded scenario, sent on `hello` and `load_scenario`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub schema_version: u32,
    pub session_id: String,
    pub scenario: String,
    pub timestep: f64,
    pub image_duration: f64,
    pub cycle_duration: f64,
    /// T/m
    pub max_gradient: f64,
    pub stage_bounds: Rect<f64>,
    pub field_of_view: Rect<f64>,
    pub frame_width: usize,
    pub frame_height: usize,
    pub time_scale: f64,
    pub debug: bool,
}

/// Acknowledgement of a command; sent with the command's own type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub in_reply_to: u64,
    pub accepted: bool,
    /// The gradient magnitude was reduced to the cap.
    pub clamped: bool,
    /// The command as installed.
    pub applied: Value,
    /// Simulation time from which the command acts, s.
    pub effective_time: f64,
    /// The client's `t`, echoed for latency measurement.
    pub client_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePayload {
    pub sequence_index: u64,
    /// Start of the imaging window, s.
    pub timestamp: f64,
    pub width: usize,
    pub height: usize,
    pub field_of_view: Rect<f64>,
    /// Always `gray8`: one byte per pixel, row-major, row 0 at the top.
    pub encoding: String,
    /// Standard base64 with padding.
    pub pixels: String,
}

impl FramePayload {
    pub fn from_frame(frame: &MRFrame) -> Self {
        Self {
            sequence_index: frame.sequence_index,
            timestamp: frame.timestamp,
            width: frame.width,
            height: frame.height,
            field_of_view: frame.field_of_view,
            encoding: "gray8".into(),
            pixels: base64::engine::general_purpose::STANDARD.encode(frame.to_bytes()),
        }
    }

    pub fn decode_pixels(&self) -> Result<Vec<u8>, base64::DecodeError> {
        base64::engine::general_purpose::STANDARD.decode(&self.pixels)
    }
}

/// Ground truth, only sent to debug clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Pa
    pub local_pressure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub t: f64,
    pub phase: Phase,
    pub paused: bool,
    pub ended: Option<EndReason>,
    pub time_scale: f64,
    pub commanded_gradient: Vec2,
    pub hifu: HifuState<f64>,
    /// Focal pressure for the current drive, Pa.
    pub focal_pressure: f64,
    pub stage_target: Vec2,
    pub bubble_intact: bool,
    pub drug_remaining: f64,
    pub cumulative_released: f64,
    /// Artifact centroid in the latest frame.
    pub artifact: Option<Vec2>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truth: Option<Truth>,
}

/// Server to client messages.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerMessage {
    Hello(SessionInfo),
    /// `kind` is the acknowledged command's type.
    Ack { kind: &'static str, ack: Ack },
    Frame(FramePayload),
    State(StatePayload),
    Event(EventRecord),
    Metrics(Box<MetricsReport>),
    Trace(CommandTrace),
    Error(ErrorPayload),
}

impl ServerMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ServerMessage::Hello(_) => "hello",
            ServerMessage::Ack { kind, .. } => kind,
            ServerMessage::Frame(_) => "frame",
            ServerMessage::State(_) => "state",
            ServerMessage::Event(_) => "event",
            ServerMessage::Metrics(_) => "metrics",
            ServerMessage::Trace(_) => "trace",
            ServerMessage::Error(_) => "error",
        }
    }

    fn payload(&self) -> Value {
        let v = match self {
            ServerMessage::Hello(p) => serde_json::to_value(p),
            ServerMessage::Ack { ack, .. } => serde_json::to_value(ack),
            ServerMessage::Frame(p) => serde_json::to_value(p),
            ServerMessage::State(p) => serde_json::to_value(p),
            ServerMessage::Event(p) => serde_json::to_value(p),
            ServerMessage::Metrics(p) => serde_json::to_value(p),
            ServerMessage::Trace(p) => serde_json::to_value(p),
            ServerMessage::Error(p) => serde_json::to_value(p),
        };
        v.expect("payload types serialize")
    }

    /// One wire line, without the trailing newline.
    pub fn encode(&self, seq: u64, t: f64) -> String {
        let raw = RawMessage { kind: self.kind().to_string(), seq, t, payload: self.payload() };
        serde_json::to_string(&raw).expect("envelope serializes")
    }
}

/// Builds a client line; used by tests and tools.
pub fn client_line(kind: &str, seq: u64, t: f64, payload: Value) -> String {
    serde_json::to_string(&RawMessage { kind: kind.into(), seq, t, payload }).expect("envelope serializes")
}
