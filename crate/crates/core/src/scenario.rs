//! Scenario documents (TOML) and their validation.

use serde::{Deserialize, Serialize};

use crate::capsule::{CapsuleGeometry, ReleaseRateModel, ThresholdModel};
use crate::dye::DyeParams;
use crate::dynamics::DynamicsParams;
use crate::environment::{self, Environment, Region, RegionRole, RegionShape};
use crate::error::{SimError, ValidationError};
use crate::hifu::{HifuConfig, Medium};
use crate::imaging::ImagingConfig;
use crate::scalar::Vec2;
use crate::sequence::SequenceParams;

pub const SCHEMA_VERSION: u32 = 1;

const BUNDLED: [(&str, &str); 3] = [
    ("open_pool", include_str!("../scenarios/open_pool.toml")),
    ("spiral_intestine", include_str!("../scenarios/spiral_intestine.toml")),
    ("u_channel", include_str!("../scenarios/u_channel.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    #[default]
    OpenPool,
    SpiralIntestine,
    UChannel,
    /// Walls and regions given explicitly.
    Custom,
}

/// A named region. Give `center` and `radius` for a disc or `points` for a polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub name: String,
    #[serde(default)]
    pub role: RegionRole,
    pub center: Option<Vec2<f64>>,
    pub radius: Option<f64>,
    pub points: Option<Vec<Vec2<f64>>>,
}

impl RegionSpec {
    fn build(&self) -> Result<Region<f64>, ValidationError> {
        let shape = match (&self.center, self.radius, &self.points) {
            (Some(c), Some(r), None) => RegionShape::Disc { center: *c, radius: r },
            (None, None, Some(p)) if p.len() >= 3 => RegionShape::Polygon { points: p.clone() },
            _ => {
                return Err(ValidationError::new(
                    format!("environment.regions.{}", self.name),
                    "give either center and radius, or at least 3 points",
                ))
            }
        };
        Ok(Region { name: self.name.clone(), role: self.role, shape })
    }
}

/// World description. Unset dimensions take the defaults of the chosen kind.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub kind: EnvironmentKind,
    /// Side of the open pool, m.
    pub size: Option<f64>,
    /// Centerline length of the intestine, m.
    pub length: Option<f64>,
    pub folds: Option<usize>,
    pub channel_width: Option<f64>,
    pub fold_radius: Option<f64>,
    pub leg_length: Option<f64>,
    pub turn_radius: Option<f64>,
    pub targets: Option<usize>,
    pub target_radius: Option<f64>,
    /// Extra channel length beyond each end of the centerline, m.
    pub cap: Option<f64>,
    pub walls: Option<Vec<Vec<Vec2<f64>>>>,
    pub centerline: Option<Vec<Vec2<f64>>>,
    /// Appended to the generated regions (or the only ones for `custom`).
    pub regions: Vec<RegionSpec>,
    pub fluid_label: Option<String>,
    /// Replaces the capsule drag coefficient in this world, N·s/m.
    pub drag_override: Option<f64>,
}

impl EnvironmentSpec {
    pub fn build(&self) -> Result<Environment<f64>, ValidationError> {
        let positive = |name: &str, v: Option<f64>, default: f64| -> Result<f64, ValidationError> {
            let v = v.unwrap_or(default);
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(ValidationError::new(format!("environment.{name}"), "must be > 0"))
            }
        };
        let mut env = match self.kind {
            EnvironmentKind::OpenPool => environment::open_pool(positive("size", self.size, 0.1)?),
            EnvironmentKind::SpiralIntestine => {
                let length = positive("length", self.length, 0.5)?;
                let folds = self.folds.unwrap_or(4);
                let width = positive("channel_width", self.channel_width, 8.0e-3)?;
                let radius = positive("fold_radius", self.fold_radius, 8.0e-3)?;
                let cap = positive("cap", self.cap, 4.0e-3)?;
                if radius * 2.0 <= width {
                    return Err(ValidationError::new("environment.fold_radius", "must exceed half the channel width"));
                }
                if length <= folds as f64 * std::f64::consts::PI * radius {
                    return Err(ValidationError::new("environment.length", "too short for the requested folds"));
                }
                environment::spiral_intestine(length, folds, width, radius, cap)
            }
            EnvironmentKind::UChannel => {
                let width = positive("channel_width", self.channel_width, 8.0e-3)?;
                let radius = positive("turn_radius", self.turn_radius, 1.5e-2)?;
                if radius * 2.0 <= width {
                    return Err(ValidationError::new("environment.turn_radius", "must exceed half the channel width"));
                }
                environment::u_channel(
                    positive("leg_length", self.leg_length, 6.0e-2)?,
                    radius,
                    width,
                    self.targets.unwrap_or(4),
                    positive("target_radius", self.target_radius, 1.2e-2)?,
                    positive("cap", self.cap, 4.0e-3)?,
                )
            }
            EnvironmentKind::Custom => {
                let walls = self
                    .walls
                    .clone()
                    .ok_or_else(|| ValidationError::new("environment.walls", "required for a custom environment"))?;
                let width = positive("channel_width", self.channel_width, f64::NAN)
                    .map_err(|_| ValidationError::new("environment.channel_width", "required and > 0 for a custom environment"))?;
                Environment::new(walls, width, Vec::new(), "water", self.centerline.clone())
            }
        };
        for r in &self.regions {
            env.regions.push(r.build()?);
        }
        if let Some(label) = &self.fluid_label {
            env.fluid_label = label.clone();
        }
        if let Some(c) = &self.centerline {
            if c.len() < 2 {
                return Err(ValidationError::new("environment.centerline", "needs at least 2 points"));
            }
            env.centerline = Some(c.clone());
        }
        env.validate()?;
        Ok(env)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    /// Defaults to the start region, else the origin.
    pub position: Option<Vec2<f64>>,
    pub bubble_intact: bool,
    /// Capsule held in place (bench release measurements).
    pub fixed: bool,
}

impl Default for InitialState {
    fn default() -> Self {
        Self { position: None, bubble_intact: true, fixed: false }
    }
}

/// Transducer state at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransducerStart {
    /// Defaults to the capsule's start position.
    pub focus: Option<Vec2<f64>>,
    pub medium: Medium,
    pub drive_voltage: f64,
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSpec {
    pub wall_friction_factor: f64,
    pub static_friction: f64,
    pub rest_speed: f64,
}

impl Default for DynamicsSpec {
    fn default() -> Self {
        let d = DynamicsParams::<f64>::default();
        Self { wall_friction_factor: d.wall_friction_factor, static_friction: d.static_friction, rest_speed: d.rest_speed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndConditions {
    /// s
    pub time_limit: f64,
    pub on_goal: bool,
    pub on_drug_empty: bool,
}

impl Default for EndConditions {
    fn default() -> Self {
        Self { time_limit: 60.0, on_goal: true, on_drug_empty: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TelemetrySpec {
    /// Steps between state records.
    pub record_every: u64,
}

impl Default for TelemetrySpec {
    fn default() -> Self {
        Self { record_every: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSpec {
    /// The capsule counts as empty once the remaining fraction of its cargo
    /// is at or below this value.
    pub emptying_fraction: f64,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self { emptying_fraction: 1.0e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    /// s
    pub timestep: f64,
    /// Relative spread of a per-run release-rate factor; 0 keeps the nominal curve.
    pub release_jitter_sigma: f64,
    pub environment: EnvironmentSpec,
    pub capsule: CapsuleGeometry<f64>,
    pub initial: InitialState,
    pub threshold: ThresholdModel<f64>,
    pub release: ReleaseRateModel<f64>,
    pub sequence: SequenceParams<f64>,
    pub hifu: HifuConfig<f64>,
    pub transducer: TransducerStart,
    pub dynamics: DynamicsSpec,
    pub imaging: ImagingConfig,
    pub dye: DyeParams<f64>,
    pub end: EndConditions,
    pub telemetry: TelemetrySpec,
    pub metrics: MetricsSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "open_pool".into(),
            seed: 0,
            timestep: 1.0e-3,
            release_jitter_sigma: 0.0,
            environment: EnvironmentSpec::default(),
            capsule: CapsuleGeometry::default(),
            initial: InitialState::default(),
            threshold: ThresholdModel::default(),
            release: ReleaseRateModel::default(),
            sequence: SequenceParams::default(),
            hifu: HifuConfig::default(),
            transducer: TransducerStart::default(),
            dynamics: DynamicsSpec::default(),
            imaging: ImagingConfig::default(),
            dye: DyeParams::default(),
            end: EndConditions::default(),
            telemetry: TelemetrySpec::default(),
            metrics: MetricsSpec::default(),
        }
    }
}

/// Number of whole `dt` steps in `span`, if it is a whole number.
pub fn whole_steps(span: f64, dt: f64) -> Option<u64> {
    let n = (span / dt).round();
    (n >= 0.0 && (n * dt - span).abs() <= 1e-9 * span.abs().max(dt)).then_some(n as u64)
}

impl ScenarioConfig {
    /// Checks every module invariant and returns the built world.
    pub fn validate(&self) -> Result<Environment<f64>, ValidationError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ValidationError::new("schema_version", format!("must be {SCHEMA_VERSION}")));
        }
        if !(self.timestep > 0.0 && self.timestep <= 0.01) {
            return Err(ValidationError::new("timestep", "must be in (0, 0.01] s"));
        }
        if !(self.release_jitter_sigma >= 0.0 && self.release_jitter_sigma < 1.0) {
            return Err(ValidationError::new("release_jitter_sigma", "must be in [0, 1)"));
        }
        self.capsule.validate()?;
        self.threshold.validate()?;
        self.release.validate()?;
        self.sequence.validate()?;
        for (name, span) in [
            ("sequence.image_duration", self.sequence.image_duration),
            ("sequence.actuation_duration", self.sequence.actuation_duration),
            ("dye.step_interval", self.dye.step_interval),
        ] {
            if whole_steps(span, self.timestep).is_none_or(|n| n == 0) {
                return Err(ValidationError::new(name, "must be a whole, non-zero number of timesteps"));
            }
        }
        self.hifu.validate()?;
        self.dynamics_params(self.capsule.drag_coefficient).validate()?;
        self.imaging.validate(self.capsule.outer_radius())?;
        self.dye.validate()?;
        if !(self.end.time_limit > 0.0 && self.end.time_limit.is_finite()) {
            return Err(ValidationError::new("end.time_limit", "must be > 0"));
        }
        if self.telemetry.record_every == 0 {
            return Err(ValidationError::new("telemetry.record_every", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.metrics.emptying_fraction) {
            return Err(ValidationError::new("metrics.emptying_fraction", "must be in [0, 1)"));
        }

        let env = self.environment.build()?;
        if let Some(drag) = self.environment.drag_override {
            if !(drag > 0.0) {
                return Err(ValidationError::new("environment.drag_override", "must be > 0"));
            }
        }
        if !(env.channel_width > self.capsule.outer_diameter) {
            return Err(ValidationError::new("environment.channel_width", "must exceed the capsule outer diameter"));
        }
        let start = self.start_position(&env);
        if !env.is_navigable(start) || env.distance_to_walls(start) < self.capsule.outer_radius() {
            return Err(ValidationError::new("initial.position", "capsule must start fully inside the navigable region"));
        }
        let t = &self.transducer;
        if !(t.drive_voltage >= 0.0 && t.drive_voltage <= self.hifu.max_drive_voltage) {
            return Err(ValidationError::new("transducer.drive_voltage", "must be within [0, hifu.max_drive_voltage]"));
        }
        if !self.stage_bounds(&env).contains(self.focus_start(&env)) {
            return Err(ValidationError::new("transducer.focus", "must lie within the stage bounds"));
        }
        Ok(env)
    }

    pub fn start_position(&self, env: &Environment<f64>) -> Vec2<f64> {
        self.initial
            .position
            .or_else(|| env.regions_with_role(RegionRole::Start).next().map(|r| r.shape.anchor()))
            .unwrap_or_else(Vec2::zero)
    }

    pub fn focus_start(&self, env: &Environment<f64>) -> Vec2<f64> {
        self.transducer.focus.unwrap_or_else(|| self.start_position(env))
    }

    /// Configured stage bounds, or the world bounds when unset.
    pub fn stage_bounds(&self, env: &Environment<f64>) -> crate::geometry::Rect<f64> {
        self.hifu.stage_bounds.unwrap_or_else(|| env.bounds())
    }

    pub fn dynamics_params(&self, capsule_drag: f64) -> DynamicsParams<f64> {
        DynamicsParams {
            drag: self.environment.drag_override.unwrap_or(capsule_drag),
            wall_friction_factor: self.dynamics.wall_friction_factor,
            static_friction: self.dynamics.static_friction,
            rest_speed: self.dynamics.rest_speed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Parses and validates a scenario document. An empty document is the
/// default open pool.
pub fn load_scenario(document: &str) -> Result<ScenarioConfig, SimError> {
    let cfg: ScenarioConfig = toml::from_str(document).map_err(|e| SimError::Parse(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn bundled_scenario_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_scenario_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled_scenario(name: &str) -> Option<ScenarioConfig> {
    bundled_scenario_source(name).map(|s| load_scenario(s).expect("bundled scenarios are valid"))
}
