//! Capsule geometry, cargo accounting and the bubble-stopper release law.
//!
//! The capsule is a hollow polymer sphere around a spherical magnetic core.
//! A small hydrophobic hole in the shell traps an air bubble that seals the
//! cargo until the local acoustic pressure reaches the removal threshold.
//! After that, release proceeds at a pressure-dependent rate.

use serde::{Deserialize, Serialize};

use crate::error::{NoBubble, ValidationError};
use crate::scalar::{Scalar, Vec2};

/// Largest hole diameter that still captures a stopper bubble (exclusive).
pub const MAX_BUBBLE_HOLE_DIAMETER: f64 = 1.0e-3;

/// Emptying durations at 1.4, 1.9 and 2.4 MPa for the default capsule.
pub const REFERENCE_EMPTYING: [(f64, f64); 3] = [(1.4e6, 158.0), (1.9e6, 38.0), (2.4e6, 20.0)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapsuleGeometry<S: Scalar> {
    pub outer_diameter: S,
    pub wall_thickness: S,
    pub hole_diameter: S,
    pub core_diameter: S,
    /// A/m
    pub core_saturation_magnetization: S,
    /// kg/m³
    pub shell_density: S,
    pub core_density: S,
    pub drug_density: S,
    /// Lumped linear drag, N·s/m.
    pub drag_coefficient: S,
}

impl<S: Scalar> Default for CapsuleGeometry<S> {
    fn default() -> Self {
        Self {
            outer_diameter: S::lit(5.0e-3),
            wall_thickness: S::lit(5.0e-4),
            hole_diameter: S::lit(5.0e-4),
            core_diameter: S::lit(1.5e-3),
            core_saturation_magnetization: S::lit(1.0e6),
            shell_density: S::lit(1100.0),
            core_density: S::lit(7740.0),
            drug_density: S::lit(1000.0),
            drag_coefficient: S::lit(3.0e-3),
        }
    }
}

fn sphere_volume<S: Scalar>(diameter: S) -> S {
    S::PI() / S::lit(6.0) * diameter * diameter * diameter
}

impl<S: Scalar> CapsuleGeometry<S> {
    pub fn outer_radius(&self) -> S {
        self.outer_diameter / S::lit(2.0)
    }

    pub fn inner_diameter(&self) -> S {
        self.outer_diameter - S::lit(2.0) * self.wall_thickness
    }

    pub fn core_volume(&self) -> S {
        sphere_volume(self.core_diameter)
    }

    pub fn shell_volume(&self) -> S {
        sphere_volume(self.outer_diameter) - sphere_volume(self.inner_diameter())
    }

    /// Mass of shell, core and a full cargo. Released cargo is replaced by
    /// surrounding fluid, so the mass is treated as constant over a run.
    pub fn mass(&self) -> S {
        self.shell_volume() * self.shell_density
            + self.core_volume() * self.core_density
            + cargo_volume(self) * self.drug_density
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let lengths = [
            ("outer_diameter", self.outer_diameter),
            ("wall_thickness", self.wall_thickness),
            ("hole_diameter", self.hole_diameter),
            ("core_diameter", self.core_diameter),
        ];
        for (name, v) in lengths {
            if !(v > S::zero() && v.is_finite()) {
                return Err(ValidationError::new(format!("capsule.{name}"), "must be a finite length > 0"));
            }
        }
        if self.wall_thickness >= self.outer_radius() {
            return Err(ValidationError::new("capsule.wall_thickness", "must be < outer_diameter / 2"));
        }
        if self.core_diameter >= self.inner_diameter() {
            return Err(ValidationError::new(
                "capsule.core_diameter",
                "must be < outer_diameter - 2 * wall_thickness",
            ));
        }
        if self.hole_diameter >= S::lit(MAX_BUBBLE_HOLE_DIAMETER) {
            return Err(ValidationError::new(
                "capsule.hole_diameter",
                "must be < 1.0e-3 m for the hole to capture a stopper bubble",
            ));
        }
        if !(self.core_saturation_magnetization >= S::zero()) {
            return Err(ValidationError::new("capsule.core_saturation_magnetization", "must be >= 0"));
        }
        for (name, v) in [
            ("shell_density", self.shell_density),
            ("core_density", self.core_density),
            ("drug_density", self.drug_density),
            ("drag_coefficient", self.drag_coefficient),
        ] {
            if !(v > S::zero() && v.is_finite()) {
                return Err(ValidationError::new(format!("capsule.{name}"), "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// Magnetic moment of the saturated core, `M_sat · V_core`.
pub fn saturation_moment<S: Scalar>(geometry: &CapsuleGeometry<S>) -> S {
    geometry.core_saturation_magnetization * geometry.core_volume()
}

/// Fluid volume inside the shell minus the core.
pub fn cargo_volume<S: Scalar>(geometry: &CapsuleGeometry<S>) -> S {
    sphere_volume(geometry.inner_diameter()) - geometry.core_volume()
}

/// Linear law for the acoustic pressure that dislodges the stopper bubble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdModel<S: Scalar> {
    /// Pressure at the reference geometry, Pa.
    pub reference_pressure: S,
    pub reference_hole_diameter: S,
    pub reference_wall_thickness: S,
    /// Pressure drop per metre of extra hole diameter, Pa/m.
    pub hole_slope: S,
    /// Pressure rise per metre of extra wall thickness, Pa/m.
    pub wall_slope: S,
    pub floor: S,
}

impl<S: Scalar> Default for ThresholdModel<S> {
    fn default() -> Self {
        Self {
            reference_pressure: S::lit(1.25e6),
            reference_hole_diameter: S::lit(5.0e-4),
            reference_wall_thickness: S::lit(5.0e-4),
            hole_slope: S::lit(2.5e9),
            wall_slope: S::lit(1.0e9),
            floor: S::lit(5.0e5),
        }
    }
}

impl<S: Scalar> ThresholdModel<S> {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.reference_pressure > S::zero()) {
            return Err(ValidationError::new("threshold.reference_pressure", "must be > 0"));
        }
        if !(self.hole_slope >= S::zero() && self.wall_slope >= S::zero()) {
            return Err(ValidationError::new(
                "capsule.threshold",
                "hole_slope and wall_slope must be >= 0 to keep the law monotone",
            ));
        }
        if !(self.floor >= S::zero()) {
            return Err(ValidationError::new("threshold.floor", "must be >= 0"));
        }
        Ok(())
    }
}

/// Acoustic pressure required to remove the stopper bubble.
pub fn bubble_removal_threshold<S: Scalar>(
    geometry: &CapsuleGeometry<S>,
    model: &ThresholdModel<S>,
) -> Result<S, NoBubble> {
    if geometry.hole_diameter >= S::lit(MAX_BUBBLE_HOLE_DIAMETER) {
        return Err(NoBubble { hole_diameter: geometry.hole_diameter.as_f64() });
    }
    let p = model.reference_pressure - model.hole_slope * (geometry.hole_diameter - model.reference_hole_diameter)
        + model.wall_slope * (geometry.wall_thickness - model.reference_wall_thickness);
    Ok(p.max(model.floor))
}

/// One anchor of the pressure → release-rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateAnchor<S: Scalar> {
    /// Pa
    pub pressure: S,
    /// m³/s
    pub rate: S,
}

/// Piecewise-linear release rate through `(0, 0)` and the anchors, held
/// constant above the last anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReleaseRateModel<S: Scalar> {
    pub anchors: Vec<RateAnchor<S>>,
    /// Below this pressure nothing flows even with the bubble gone.
    pub minimum_release_pressure: S,
}

impl<S: Scalar> Default for ReleaseRateModel<S> {
    fn default() -> Self {
        let cargo = cargo_volume(&CapsuleGeometry::<S>::default());
        Self {
            anchors: REFERENCE_EMPTYING
                .iter()
                .map(|&(p, secs)| RateAnchor { pressure: S::lit(p), rate: cargo / S::lit(secs) })
                .collect(),
            minimum_release_pressure: S::zero(),
        }
    }
}

impl<S: Scalar> ReleaseRateModel<S> {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.anchors.is_empty() {
            return Err(ValidationError::new("release.anchors", "at least one anchor is required"));
        }
        let mut prev = RateAnchor { pressure: S::zero(), rate: S::zero() };
        for (i, a) in self.anchors.iter().enumerate() {
            if !(a.pressure > prev.pressure) {
                return Err(ValidationError::new(
                    format!("release.anchors[{i}].pressure"),
                    "pressures must be > 0 and strictly increasing",
                ));
            }
            if !(a.rate > prev.rate) {
                return Err(ValidationError::new(
                    format!("release.anchors[{i}].rate"),
                    "rates must be > 0 and strictly increasing",
                ));
            }
            prev = *a;
        }
        if !(self.minimum_release_pressure >= S::zero()) {
            return Err(ValidationError::new("release.minimum_release_pressure", "must be >= 0"));
        }
        Ok(())
    }
}

/// Release rate in m³/s at acoustic pressure `p` (Pa).
pub fn release_rate<S: Scalar>(p: S, model: &ReleaseRateModel<S>) -> S {
    if !(p > S::zero()) || p < model.minimum_release_pressure {
        return S::zero();
    }
    let mut lo = RateAnchor { pressure: S::zero(), rate: S::zero() };
    for a in &model.anchors {
        if p <= a.pressure {
            let f = (p - lo.pressure) / (a.pressure - lo.pressure);
            return lo.rate + f * (a.rate - lo.rate);
        }
        lo = *a;
    }
    lo.rate
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapsuleState<S: Scalar> {
    pub position: Vec2<S>,
    pub velocity: Vec2<S>,
    pub drug_volume_remaining: S,
    pub bubble_intact: bool,
    pub cumulative_released: S,
}

impl<S: Scalar> CapsuleState<S> {
    /// Fully loaded capsule at rest.
    pub fn loaded(geometry: &CapsuleGeometry<S>, position: Vec2<S>, bubble_intact: bool) -> Self {
        Self {
            position,
            velocity: Vec2::zero(),
            drug_volume_remaining: cargo_volume(geometry),
            bubble_intact,
            cumulative_released: S::zero(),
        }
    }

    pub fn initial_volume(&self) -> S {
        self.drug_volume_remaining + self.cumulative_released
    }
}

/// Result of exposing the capsule to acoustic pressure for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureOutcome<S: Scalar> {
    pub released: S,
    /// The bubble was dislodged during this step.
    pub bubble_removed: bool,
}

/// Advances the stopper and cargo over `dt` at a constant local pressure.
///
/// Removing the bubble consumes the step; flow starts on the next call.
/// `rate_scale` multiplies the modelled rate (1 for the nominal curve).
pub fn apply_acoustic_pressure<S: Scalar>(
    state: &mut CapsuleState<S>,
    local_pressure: S,
    dt: S,
    rate_model: &ReleaseRateModel<S>,
    threshold: S,
    rate_scale: S,
) -> ExposureOutcome<S> {
    debug_assert!(dt > S::zero());
    if state.bubble_intact {
        if local_pressure >= threshold {
            state.bubble_intact = false;
            return ExposureOutcome { released: S::zero(), bubble_removed: true };
        }
        return ExposureOutcome { released: S::zero(), bubble_removed: false };
    }
    let wanted = release_rate(local_pressure, rate_model) * rate_scale.max(S::zero()) * dt;
    let released = wanted.min(state.drug_volume_remaining).max(S::zero());
    state.drug_volume_remaining -= released;
    state.cumulative_released += released;
    ExposureOutcome { released, bubble_removed: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn moment_matches_hand_oracle() {
        let g = CapsuleGeometry::<f64>::default();
        assert!(rel(saturation_moment(&g), 1.767_145_867_644_258e-3) < 1e-12);
        let big = CapsuleGeometry { core_diameter: 3.0e-3, outer_diameter: 8.0e-3, ..g };
        assert!(rel(saturation_moment(&big), 1.413_716_694_115_407e-2) < 1e-12);
        assert!(rel(saturation_moment(&big) / saturation_moment(&g), 8.0) < 1e-12);
        let zero = CapsuleGeometry { core_saturation_magnetization: 0.0, ..g };
        assert_eq!(saturation_moment(&zero), 0.0);
    }

    #[test]
    fn cargo_volume_oracle() {
        let g = CapsuleGeometry::<f64>::default();
        assert!(rel(cargo_volume(&g), 3.174_317_577_064_687e-8) < 1e-12);
        let wide = CapsuleGeometry { outer_diameter: 6.0e-3, ..g };
        assert!(rel(cargo_volume(&wide), 6.368_270_108_214_31e-8) < 1e-12);
        // shell collapsing onto the core
        let tight = CapsuleGeometry { wall_thickness: 2.5e-3 - 0.75e-3 - 1e-9, ..g };
        assert!(cargo_volume(&tight) < 1e-14);
    }

    #[test]
    fn default_mass_and_time_constant() {
        let g = CapsuleGeometry::<f64>::default();
        assert!(rel(g.mass(), 8.06e-5) < 2e-3);
        assert!(rel(g.mass() / g.drag_coefficient, 26.9e-3) < 3e-3);
    }

    #[test]
    fn threshold_examples() {
        let m = ThresholdModel::default();
        let g = CapsuleGeometry::<f64>::default();
        assert_eq!(bubble_removal_threshold(&g, &m).unwrap(), 1.25e6);
        let thin = CapsuleGeometry { wall_thickness: 3.0e-4, ..g };
        assert!((bubble_removal_threshold(&thin, &m).unwrap() - 1.05e6).abs() < 1e-6);
        let open = CapsuleGeometry { hole_diameter: 1.0e-3, ..g };
        assert!(bubble_removal_threshold(&open, &m).is_err());
        let huge = CapsuleGeometry { hole_diameter: 9.0e-4, wall_thickness: 3.0e-4, ..g };
        assert_eq!(bubble_removal_threshold(&huge, &m).unwrap(), 5.0e5);
    }

    #[test]
    fn rate_table_examples() {
        let m = ReleaseRateModel::<f64>::default();
        assert!(rel(release_rate(1.4e6, &m), 2.009e-10) < 5e-4);
        assert!(rel(release_rate(1.9e6, &m), 8.353e-10) < 5e-4);
        assert!(rel(release_rate(2.4e6, &m), 1.587e-9) < 5e-4);
        assert_eq!(release_rate(0.0, &m), 0.0);
        assert_eq!(release_rate(3.0e6, &m), release_rate(2.4e6, &m));
        assert!(rel(release_rate(0.7e6, &m), 0.5 * release_rate(1.4e6, &m)) < 1e-12);
        m.validate().unwrap();
    }

    #[test]
    fn rate_model_rejects_unsorted_anchors() {
        let mut m = ReleaseRateModel::<f64>::default();
        m.anchors.swap(0, 1);
        assert!(m.validate().is_err());
    }

    #[test]
    fn bubble_then_release() {
        let g = CapsuleGeometry::<f64>::default();
        let model = ReleaseRateModel::default();
        let mut s = CapsuleState::loaded(&g, Vec2::zero(), true);
        let below = apply_acoustic_pressure(&mut s, 1.2e6, 1e-3, &model, 1.25e6, 1.0);
        assert!(!below.bubble_removed && s.bubble_intact && below.released == 0.0);
        let hit = apply_acoustic_pressure(&mut s, 1.25e6, 1e-3, &model, 1.25e6, 1.0);
        assert!(hit.bubble_removed && !s.bubble_intact && hit.released == 0.0);
        let flow = apply_acoustic_pressure(&mut s, 1.4e6, 1e-3, &model, 1.25e6, 1.0);
        assert!(flow.released > 0.0);
        let none = apply_acoustic_pressure(&mut s, 0.0, 1e-3, &model, 1.25e6, 1.0);
        assert_eq!(none.released, 0.0);
        assert!(!s.bubble_intact);
    }

    #[test]
    fn emptying_at_table_pressures() {
        let g = CapsuleGeometry::<f64>::default();
        let model = ReleaseRateModel::default();
        let dt = 1e-3;
        for (p, secs) in REFERENCE_EMPTYING {
            let mut s = CapsuleState::loaded(&g, Vec2::zero(), false);
            let cargo = s.drug_volume_remaining;
            let mut steps = 0u64;
            while s.drug_volume_remaining > 1e-9 * cargo {
                apply_acoustic_pressure(&mut s, p, dt, &model, 1.25e6, 1.0);
                steps += 1;
            }
            let t = steps as f64 * dt;
            assert!((t - secs).abs() <= dt + 1e-9, "{p} Pa emptied in {t} s");
        }
    }

    #[test]
    fn f32_instantiation() {
        let g = CapsuleGeometry::<f32>::default();
        assert!((saturation_moment(&g) - 1.767e-3).abs() < 1e-6);
        assert!((bubble_removal_threshold(&g, &ThresholdModel::default()).unwrap() - 1.25e6).abs() < 1.0);
    }
}
