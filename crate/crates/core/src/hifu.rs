//! Focused-ultrasound transducer on a 2D stage.
//!
//! Focal pressure is linear in drive voltage; a gel layer in the beam path
//! scales it by a constant transmission factor. Around the focus the lateral
//! profile is Gaussian, and the capsule feels a radiation force proportional
//! to the square of the local pressure, directed away from the focus.

use serde::{Deserialize, Serialize};

use crate::error::{OutOfBounds, ValidationError};
use crate::geometry::Rect;
use crate::scalar::{Scalar, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Medium {
    #[default]
    WaterOnly,
    ThroughGel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HifuConfig<S: Scalar> {
    /// Pa/V
    pub pressure_slope_water: S,
    pub gel_transmission_factor: S,
    /// V
    pub max_drive_voltage: S,
    /// Lateral Gaussian width of the focal spot, m.
    pub focal_sigma: S,
    /// N/Pa²
    pub radiation_force_coefficient: S,
    /// m/s
    pub stage_speed: S,
    /// Reachable focus positions. `None` leaves the stage unbounded.
    pub stage_bounds: Option<Rect<S>>,
}

impl<S: Scalar> Default for HifuConfig<S> {
    fn default() -> Self {
        Self {
            pressure_slope_water: S::lit(2.4e4),
            gel_transmission_factor: S::lit(0.90),
            max_drive_voltage: S::lit(100.0),
            focal_sigma: S::lit(2.5e-3),
            radiation_force_coefficient: S::lit(1.3e-17),
            stage_speed: S::lit(5.0e-3),
            stage_bounds: None,
        }
    }
}

impl<S: Scalar> HifuConfig<S> {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.pressure_slope_water > S::zero()) {
            return Err(ValidationError::new("hifu.pressure_slope_water", "must be > 0"));
        }
        if !(self.gel_transmission_factor > S::zero() && self.gel_transmission_factor <= S::one()) {
            return Err(ValidationError::new("hifu.gel_transmission_factor", "must be in (0, 1]"));
        }
        if !(self.max_drive_voltage > S::zero()) {
            return Err(ValidationError::new("hifu.max_drive_voltage", "must be > 0"));
        }
        if !(self.focal_sigma > S::zero()) {
            return Err(ValidationError::new("hifu.focal_sigma", "must be > 0"));
        }
        if !(self.radiation_force_coefficient >= S::zero()) {
            return Err(ValidationError::new("hifu.radiation_force_coefficient", "must be >= 0"));
        }
        if !(self.stage_speed > S::zero()) {
            return Err(ValidationError::new("hifu.stage_speed", "must be > 0"));
        }
        if let Some(b) = &self.stage_bounds {
            if !b.is_valid() {
                return Err(ValidationError::new("hifu.stage_bounds", "must be a non-empty rectangle"));
            }
        }
        Ok(())
    }

    pub fn medium_factor(&self, medium: Medium) -> S {
        match medium {
            Medium::WaterOnly => S::one(),
            Medium::ThroughGel => self.gel_transmission_factor,
        }
    }

    /// Drive voltage that produces `pressure` at the focus, clamped to the amplifier range.
    pub fn voltage_for(&self, pressure: S, medium: Medium) -> S {
        (pressure / (self.pressure_slope_water * self.medium_factor(medium)))
            .max(S::zero())
            .min(self.max_drive_voltage)
    }

    pub fn in_bounds(&self, p: Vec2<S>) -> bool {
        self.stage_bounds.is_none_or(|b| b.contains(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HifuState<S: Scalar> {
    pub focus_position: Vec2<S>,
    pub drive_voltage: S,
    pub enabled: bool,
    #[serde(default)]
    pub medium: Medium,
}

impl<S: Scalar> HifuState<S> {
    pub fn off_at(focus: Vec2<S>, medium: Medium) -> Self {
        Self { focus_position: focus, drive_voltage: S::zero(), enabled: false, medium }
    }
}

pub fn focal_pressure<S: Scalar>(state: &HifuState<S>, cfg: &HifuConfig<S>) -> S {
    if !state.enabled {
        return S::zero();
    }
    cfg.pressure_slope_water * state.drive_voltage * cfg.medium_factor(state.medium)
}

pub fn pressure_at<S: Scalar>(point: Vec2<S>, state: &HifuState<S>, cfg: &HifuConfig<S>) -> S {
    let peak = focal_pressure(state, cfg);
    if peak == S::zero() {
        return S::zero();
    }
    let r2 = (point - state.focus_position).norm_squared();
    peak * (-r2 / (S::lit(2.0) * cfg.focal_sigma * cfg.focal_sigma)).exp()
}

/// Unit vector from the focus toward `point`. When the two coincide the
/// direction of `velocity` is used, then `+x`.
pub fn push_direction<S: Scalar>(point: Vec2<S>, focus: Vec2<S>, velocity: Vec2<S>) -> Vec2<S> {
    (point - focus).normalized().or_else(|| velocity.normalized()).unwrap_or_else(Vec2::unit_x)
}

/// Acoustic radiation force on a capsule centred at `capsule_position`.
///
/// Zero when the transducer is off and when the capsule sits exactly on the
/// focus, where the lateral push has no preferred direction.
pub fn radiation_force<S: Scalar>(capsule_position: Vec2<S>, state: &HifuState<S>, cfg: &HifuConfig<S>) -> Vec2<S> {
    let p = pressure_at(capsule_position, state, cfg);
    if p == S::zero() {
        return Vec2::zero();
    }
    match (capsule_position - state.focus_position).normalized() {
        Some(dir) => dir * (cfg.radiation_force_coefficient * p * p),
        None => Vec2::zero(),
    }
}

/// Moves the focus toward `target` at no more than the stage speed.
pub fn step_stage<S: Scalar>(
    state: &HifuState<S>,
    target: Vec2<S>,
    dt: S,
    cfg: &HifuConfig<S>,
) -> Result<HifuState<S>, OutOfBounds> {
    if !cfg.in_bounds(target) {
        return Err(OutOfBounds { x: target.x.as_f64(), y: target.y.as_f64() });
    }
    let delta = target - state.focus_position;
    let reach = cfg.stage_speed * dt;
    let focus = if delta.norm() <= reach { target } else { state.focus_position + delta * (reach / delta.norm()) };
    Ok(HifuState { focus_position: focus, ..*state })
}
