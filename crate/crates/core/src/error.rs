use thiserror::Error;

/// A configuration value broke one of the model constraints.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid `{field}`: {constraint}")]
pub struct ValidationError {
    pub field: String,
    pub constraint: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self { field: field.into(), constraint: constraint.into() }
    }
}

/// The hole is too wide to trap a stopper bubble.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("hole diameter {hole_diameter} m does not capture a bubble (needs < 1.0e-3 m)")]
pub struct NoBubble {
    pub hole_diameter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("stage target ({x}, {y}) lies outside the stage bounds")]
pub struct OutOfBounds {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("point ({x}, {y}) lies outside the dye grid")]
pub struct OutOfDomain {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("dye step dt = {dt} s exceeds the stability limit {limit} s")]
pub struct UnstableStep {
    pub dt: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no dark blob larger than {min_pixels} pixels in frame")]
pub struct NotFound {
    pub min_pixels: usize,
}

/// Any failure raised while loading or running a scenario.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("scenario document is malformed: {0}")]
    Parse(String),
    #[error("at t = {time:.3} s: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<SimError>,
    },
    #[error(transparent)]
    OutOfBounds(#[from] OutOfBounds),
    #[error(transparent)]
    OutOfDomain(#[from] OutOfDomain),
    #[error(transparent)]
    UnstableStep(#[from] UnstableStep),
    #[error(transparent)]
    NoBubble(#[from] NoBubble),
    #[error("run ended ({reason}) without meeting its completion condition")]
    IncompleteRun { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image encoding failed: {0}")]
    Image(String),
}

impl SimError {
    pub fn at(self, time: f64) -> Self {
        match self {
            e @ SimError::AtTime { .. } => e,
            other => SimError::AtTime { time, source: Box::new(other) },
        }
    }

    /// Innermost error, skipping timestamp context.
    pub fn root(&self) -> &SimError {
        match self {
            SimError::AtTime { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
