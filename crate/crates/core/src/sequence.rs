//! Imaging/actuation duty cycle of the scanner and the gradient force it applies.

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::scalar::{Scalar, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Imaging,
    Actuation,
}

/// Scanner protocol parameters that are recorded but not simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceMetadata {
    pub sequence: String,
    pub field_strength_t: f64,
    pub pixel_number: u32,
    pub slice_thickness_m: f64,
    pub flip_angle_deg: f64,
    pub rf_bandwidth_hz: f64,
    pub receiver_bandwidth_hz: f64,
    pub image_duration_s: f64,
    pub echo_time_s: f64,
    pub repetition_time_s: f64,
}

impl Default for SequenceMetadata {
    fn default() -> Self {
        Self {
            sequence: "GRE with interleaved actuation gradient".into(),
            field_strength_t: 7.0,
            pixel_number: 128,
            slice_thickness_m: 2.0e-3,
            flip_angle_deg: 40.0,
            rf_bandwidth_hz: 10.0e3,
            receiver_bandwidth_hz: 400.0e3,
            image_duration_s: 1.0,
            echo_time_s: 1.61e-3,
            repetition_time_s: 7.81e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceParams<S: Scalar> {
    pub image_duration: S,
    pub actuation_duration: S,
    /// T/m
    pub max_gradient: S,
    pub metadata: SequenceMetadata,
}

impl<S: Scalar> Default for SequenceParams<S> {
    fn default() -> Self {
        Self {
            image_duration: S::lit(0.680),
            actuation_duration: S::lit(0.320),
            max_gradient: S::lit(0.060),
            metadata: SequenceMetadata::default(),
        }
    }
}

impl<S: Scalar> SequenceParams<S> {
    pub fn cycle_duration(&self) -> S {
        self.image_duration + self.actuation_duration
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.image_duration > S::zero() && self.image_duration.is_finite()) {
            return Err(ValidationError::new("sequence.image_duration", "must be > 0"));
        }
        if !(self.actuation_duration >= S::zero() && self.actuation_duration.is_finite()) {
            return Err(ValidationError::new("sequence.actuation_duration", "must be >= 0"));
        }
        if !(self.max_gradient > S::zero() && self.max_gradient.is_finite()) {
            return Err(ValidationError::new("sequence.max_gradient", "must be > 0"));
        }
        Ok(())
    }
}

/// Operator-requested gradient in the simulation plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCommand<S: Scalar> {
    /// T/m
    pub gradient: Vec2<S>,
    pub timestamp: S,
}

impl<S: Scalar> GradientCommand<S> {
    pub fn new(gradient: Vec2<S>, timestamp: S) -> Self {
        Self { gradient, timestamp }
    }
}

pub fn phase_at<S: Scalar>(t: S, params: &SequenceParams<S>) -> Phase {
    let cycle = params.cycle_duration();
    let within = t - (t / cycle).floor() * cycle;
    if within < params.image_duration {
        Phase::Imaging
    } else {
        Phase::Actuation
    }
}

/// Caps the magnitude at `max_gradient`, keeping the direction.
pub fn clamp_gradient<S: Scalar>(cmd: GradientCommand<S>, params: &SequenceParams<S>) -> GradientCommand<S> {
    let g = cmd.gradient;
    let mag = g.norm();
    // a rescaled vector can land an ulp above the cap; accept that so a
    // second clamp is a no-op
    let slack = S::one() + S::lit(4.0) * S::epsilon();
    if mag <= params.max_gradient * slack || !(mag > S::zero()) {
        return cmd;
    }
    GradientCommand { gradient: g * (params.max_gradient / mag), timestamp: cmd.timestamp }
}

/// Magnetic pulling force `m · G` while the scanner is actuating, zero while imaging.
pub fn effective_force<S: Scalar>(
    t: S,
    cmd: &GradientCommand<S>,
    moment: S,
    params: &SequenceParams<S>,
) -> Vec2<S> {
    force_in_phase(phase_at(t, params), cmd, moment)
}

/// Same as [`effective_force`] for a phase already known to the caller.
pub fn force_in_phase<S: Scalar>(phase: Phase, cmd: &GradientCommand<S>, moment: S) -> Vec2<S> {
    match phase {
        Phase::Actuation => cmd.gradient * moment,
        Phase::Imaging => Vec2::zero(),
    }
}

pub fn duty_cycle<S: Scalar>(params: &SequenceParams<S>) -> S {
    params.actuation_duration / params.cycle_duration()
}
