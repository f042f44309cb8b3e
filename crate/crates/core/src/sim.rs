//! The fixed-step simulation loop.
//!
//! Step `k` covers `[k·dt, (k+1)·dt)`; its phase is taken at the start of
//! the step and everything it emits is stamped with the end time. Commands
//! installed between steps affect the next step only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::capsule::{apply_acoustic_pressure, bubble_removal_threshold, cargo_volume, saturation_moment, CapsuleState};
use crate::dye::{deposit, diffuse_advect_step, delivered_volume, DyeField};
use crate::dynamics::{step_dynamics, total_force, BodyState, DynamicsParams};
use crate::environment::{Environment, RegionRole};
use crate::error::{SimError, ValidationError};
use crate::hifu::{pressure_at, push_direction, step_stage, HifuConfig, HifuState};
use crate::imaging::{Imager, MRFrame, WorldSnapshot};
use crate::scalar::Vec2;
use crate::scenario::{whole_steps, ScenarioConfig};
use crate::sequence::{clamp_gradient, force_in_phase, GradientCommand, Phase};
use crate::telemetry::{DeliveryRecord, EventRecord, RegionVolume, SimEvent, StepRecord};
use crate::trace::Command;

/// What the loop produced during one step.
#[derive(Debug, Default)]
pub struct StepOutput {
    pub events: Vec<EventRecord>,
    pub record: Option<StepRecord>,
    pub frame: Option<MRFrame>,
    pub delivery: Option<DeliveryRecord>,
    /// Gradient force acting during the step, N (zero while imaging).
    pub gradient_force: Vec2<f64>,
}

/// How a command was installed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Installed {
    /// The command as it will act, after clamping.
    pub applied: Command,
    pub clamped: bool,
}

#[derive(Debug, Clone)]
struct World {
    capsule: CapsuleState<f64>,
    hifu: HifuState<f64>,
    stage_target: Vec2<f64>,
    commanded: Vec2<f64>,
    held: Vec2<f64>,
    dye: DyeField<f64>,
    inside: Vec<bool>,
    goal_reached: Option<f64>,
    emptied: bool,
    path_length: f64,
    window_start: Vec2<f64>,
    in_contact: bool,
}

pub struct Simulation {
    config: ScenarioConfig,
    env: Environment<f64>,
    imager: Imager,
    hifu_cfg: HifuConfig<f64>,
    dynamics: DynamicsParams<f64>,
    dt: f64,
    image_steps: u64,
    cycle_steps: u64,
    dye_every: u64,
    moment: f64,
    mass: f64,
    radius: f64,
    threshold: f64,
    cargo: f64,
    rate_scale: f64,
    step: u64,
    world: World,
    initial: World,
    pending: Vec<EventRecord>,
}

fn steps(span: f64, dt: f64, field: &str) -> Result<u64, ValidationError> {
    whole_steps(span, dt).filter(|&n| n > 0).ok_or_else(|| ValidationError::new(field, "must be a whole number of timesteps"))
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        let env = config.validate()?;
        let dt = config.timestep;
        let image_steps = steps(config.sequence.image_duration, dt, "sequence.image_duration")?;
        let cycle_steps = image_steps + steps(config.sequence.actuation_duration, dt, "sequence.actuation_duration")?;
        let dye_every = steps(config.dye.step_interval, dt, "dye.step_interval")?;
        let geometry = &config.capsule;
        let radius = geometry.outer_radius();
        let threshold = bubble_removal_threshold(geometry, &config.threshold)?;
        let mut hifu_cfg = config.hifu;
        hifu_cfg.stage_bounds = Some(config.stage_bounds(&env));

        let rate_scale = if config.release_jitter_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(u64::MAX);
            let n = Normal::new(1.0, config.release_jitter_sigma).expect("finite sigma");
            n.sample(&mut rng).max(0.0)
        } else {
            1.0
        };

        let start = config.start_position(&env);
        let capsule = CapsuleState::loaded(geometry, start, config.initial.bubble_intact);
        let t = &config.transducer;
        let focus = config.focus_start(&env);
        let hifu = HifuState { focus_position: focus, drive_voltage: t.drive_voltage, enabled: t.enabled, medium: t.medium };
        let dye_domain = env.bounds().expanded(2.0 * radius + config.dye.pitch);
        let world = World {
            capsule,
            hifu,
            stage_target: focus,
            commanded: Vec2::zero(),
            held: Vec2::zero(),
            dye: DyeField::covering(dye_domain, config.dye),
            inside: env.regions.iter().map(|r| r.contains(start)).collect(),
            goal_reached: None,
            emptied: false,
            path_length: 0.0,
            window_start: start,
            in_contact: false,
        };
        let imager = Imager::new(config.imaging, &env);
        Ok(Self {
            dynamics: config.dynamics_params(geometry.drag_coefficient),
            moment: saturation_moment(geometry),
            mass: geometry.mass(),
            cargo: cargo_volume(geometry),
            config,
            env,
            imager,
            hifu_cfg,
            dt,
            image_steps,
            cycle_steps,
            dye_every,
            radius,
            threshold,
            rate_scale,
            step: 0,
            initial: world.clone(),
            world,
            pending: Vec::new(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn environment(&self) -> &Environment<f64> {
        &self.env
    }

    pub fn imager(&self) -> &Imager {
        &self.imager
    }

    /// Stage bounds are always resolved here.
    pub fn hifu_config(&self) -> &HifuConfig<f64> {
        &self.hifu_cfg
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Index of the next step to run.
    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Start time of the next step.
    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn cycle_steps(&self) -> u64 {
        self.cycle_steps
    }

    pub fn image_steps(&self) -> u64 {
        self.image_steps
    }

    pub fn capsule(&self) -> &CapsuleState<f64> {
        &self.world.capsule
    }

    pub fn hifu(&self) -> &HifuState<f64> {
        &self.world.hifu
    }

    pub fn stage_target(&self) -> Vec2<f64> {
        self.world.stage_target
    }

    pub fn commanded_gradient(&self) -> Vec2<f64> {
        self.world.commanded
    }

    pub fn dye(&self) -> &DyeField<f64> {
        &self.world.dye
    }

    pub fn moment(&self) -> f64 {
        self.moment
    }

    pub fn bubble_threshold(&self) -> f64 {
        self.threshold
    }

    pub fn cargo_volume(&self) -> f64 {
        self.cargo
    }

    pub fn path_length(&self) -> f64 {
        self.world.path_length
    }

    pub fn goal_reached(&self) -> Option<f64> {
        self.world.goal_reached
    }

    pub fn drug_emptied(&self) -> bool {
        self.world.emptied
    }

    pub fn phase(&self) -> Phase {
        if self.step % self.cycle_steps < self.image_steps {
            Phase::Imaging
        } else {
            Phase::Actuation
        }
    }

    pub fn local_pressure(&self) -> f64 {
        pressure_at(self.world.capsule.position, &self.world.hifu, &self.hifu_cfg)
    }

    /// Validates `command` and installs it for the next step.
    pub fn apply(&mut self, command: &Command) -> Result<Installed, SimError> {
        match *command {
            Command::SetGradient { gradient } => {
                if !gradient.is_finite() {
                    return Err(ValidationError::new("set_gradient.gradient", "must be finite").into());
                }
                let clamped = clamp_gradient(GradientCommand::new(gradient, self.time()), &self.config.sequence).gradient;
                let was_clamped = clamped != gradient;
                self.world.commanded = clamped;
                Ok(Installed { applied: Command::SetGradient { gradient: clamped }, clamped: was_clamped })
            }
            Command::SetHifu { drive_voltage, enabled, medium } => {
                if !(drive_voltage >= 0.0 && drive_voltage <= self.hifu_cfg.max_drive_voltage) {
                    return Err(ValidationError::new("set_hifu.drive_voltage", "must be within [0, max_drive_voltage]").into());
                }
                let h = &mut self.world.hifu;
                h.drive_voltage = drive_voltage;
                h.enabled = enabled;
                if let Some(m) = medium {
                    h.medium = m;
                }
                Ok(Installed { applied: Command::SetHifu { drive_voltage, enabled, medium: Some(h.medium) }, clamped: false })
            }
            Command::MoveStage { target } => {
                if !target.is_finite() || !self.hifu_cfg.in_bounds(target) {
                    return Err(SimError::OutOfBounds(crate::error::OutOfBounds { x: target.x, y: target.y }));
                }
                self.world.stage_target = target;
                Ok(Installed { applied: *command, clamped: false })
            }
            Command::Pause | Command::Resume => Ok(Installed { applied: *command, clamped: false }),
            Command::Reset => {
                self.world = self.initial.clone();
                self.pending.push(EventRecord { t: self.time(), event: SimEvent::Reset });
                Ok(Installed { applied: *command, clamped: false })
            }
        }
    }

    /// State record stamped with the current time.
    pub fn record(&self) -> StepRecord {
        let w = &self.world;
        let phase = self.phase();
        StepRecord {
            t: self.time(),
            phase,
            position: w.capsule.position,
            velocity: w.capsule.velocity,
            commanded_gradient: w.commanded,
            applied_gradient: if phase == Phase::Actuation { w.held } else { Vec2::zero() },
            hifu: w.hifu,
            local_pressure: self.local_pressure(),
            bubble_intact: w.capsule.bubble_intact,
            drug_remaining: w.capsule.drug_volume_remaining,
            cumulative_released: w.capsule.cumulative_released,
            path_length: w.path_length,
            progress: self.env.centerline_progress(w.capsule.position),
        }
    }

    pub fn delivery(&self) -> DeliveryRecord {
        let w = &self.world;
        DeliveryRecord {
            t: self.time(),
            regions: self
                .env
                .regions
                .iter()
                .filter(|r| matches!(r.role, RegionRole::Target | RegionRole::Goal))
                .map(|r| RegionVolume { region: r.name.clone(), volume: delivered_volume(&w.dye, r) })
                .collect(),
            total_dye: w.dye.total(),
            cumulative_released: w.capsule.cumulative_released,
        }
    }

    /// Renders a frame of the current world.
    pub fn render(&self, velocity: Vec2<f64>, sequence_index: u64, timestamp: f64) -> MRFrame {
        let snapshot = WorldSnapshot {
            capsule_position: self.world.capsule.position,
            capsule_velocity: velocity,
            hifu: self.world.hifu,
            focal_sigma: self.hifu_cfg.focal_sigma,
            dye: Some(&self.world.dye),
        };
        self.imager.render(&snapshot, self.config.seed, sequence_index, timestamp)
    }

    /// Advances one step.
    pub fn step(&mut self) -> Result<StepOutput, SimError> {
        let t0 = self.time();
        self.advance().map_err(|e| e.at(t0))
    }

    fn advance(&mut self) -> Result<StepOutput, SimError> {
        let k = self.step;
        let dt = self.dt;
        let in_cycle = k % self.cycle_steps;
        let phase = if in_cycle < self.image_steps { Phase::Imaging } else { Phase::Actuation };
        let w = &mut self.world;
        if in_cycle == self.image_steps {
            w.held = w.commanded;
        }
        let t_end = (k + 1) as f64 * dt;
        let mut out = StepOutput { events: std::mem::take(&mut self.pending), ..StepOutput::default() };

        w.hifu = step_stage(&w.hifu, w.stage_target, dt, &self.hifu_cfg)?;

        let p = pressure_at(w.capsule.position, &w.hifu, &self.hifu_cfg);
        let exposure = apply_acoustic_pressure(&mut w.capsule, p, dt, &self.config.release, self.threshold, self.rate_scale);
        if exposure.bubble_removed {
            out.events.push(EventRecord { t: t_end, event: SimEvent::BubbleRemoved { pressure: p, threshold: self.threshold } });
        }
        if exposure.released > 0.0 {
            let pos = w.capsule.position;
            let outward = if w.hifu.enabled {
                push_direction(pos, w.hifu.focus_position, w.capsule.velocity)
            } else {
                push_direction(pos, pos, w.capsule.velocity)
            };
            deposit(&mut w.dye, pos - outward * self.radius, exposure.released)?;
        }

        out.gradient_force = force_in_phase(phase, &GradientCommand::new(w.held, t_end), self.moment);
        let before = w.capsule.position;
        if !self.config.initial.fixed {
            let force = total_force(
                phase,
                w.capsule.position,
                &GradientCommand::new(w.held, t_end),
                self.moment,
                &w.hifu,
                &self.hifu_cfg,
            );
            let mut body = BodyState {
                mass: self.mass,
                position: w.capsule.position,
                velocity: w.capsule.velocity,
                in_contact: w.in_contact,
            };
            step_dynamics(&mut body, force, dt, &self.dynamics, &self.env, self.radius);
            w.in_contact = body.in_contact;
            w.capsule.position = body.position;
            w.capsule.velocity = body.velocity;
            w.path_length += before.distance(body.position);
        }

        if (k + 1) % self.dye_every == 0 && w.capsule.cumulative_released > 0.0 {
            diffuse_advect_step(&mut w.dye, &w.hifu, &self.hifu_cfg, self.dye_every as f64 * dt)?;
        }

        let pos = w.capsule.position;
        for (i, region) in self.env.regions.iter().enumerate() {
            let now = region.contains(pos);
            if now && !w.inside[i] {
                match region.role {
                    RegionRole::Target => out.events.push(EventRecord {
                        t: t_end,
                        event: SimEvent::TargetEntered { region: region.name.clone() },
                    }),
                    RegionRole::Goal if w.goal_reached.is_none() => {
                        w.goal_reached = Some(t_end);
                        out.events.push(EventRecord { t: t_end, event: SimEvent::GoalReached { region: region.name.clone() } });
                    }
                    _ => {}
                }
            }
            w.inside[i] = now;
        }

        let remaining = w.capsule.drug_volume_remaining;
        if !w.emptied && !w.capsule.bubble_intact && remaining <= self.config.metrics.emptying_fraction * self.cargo {
            w.emptied = true;
            out.events.push(EventRecord { t: t_end, event: SimEvent::DrugEmptied { remaining } });
        }

        self.step = k + 1;
        let next_in_cycle = self.step % self.cycle_steps;
        if next_in_cycle == self.image_steps {
            let velocity = (pos - self.world.window_start) / self.config.sequence.image_duration;
            let index = self.step / self.cycle_steps;
            out.frame = Some(self.render(velocity, index, index as f64 * self.cycle_steps as f64 * dt));
        }
        if next_in_cycle == 0 {
            self.world.window_start = pos;
            out.delivery = Some(self.delivery());
        }
        if self.step % self.config.telemetry.record_every == 0 {
            out.record = Some(self.record());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::bundled_scenario;

    fn pool() -> Simulation {
        Simulation::new(bundled_scenario("open_pool").unwrap()).unwrap()
    }

    #[test]
    fn no_commands_no_motion() {
        let mut sim = pool();
        for _ in 0..3000 {
            sim.step().unwrap();
        }
        assert_eq!(sim.capsule().position, Vec2::zero());
        assert_eq!(sim.capsule().cumulative_released, 0.0);
    }

    #[test]
    fn gradient_is_held_for_the_whole_actuation_window() {
        let mut sim = pool();
        sim.apply(&Command::SetGradient { gradient: Vec2::new(0.06, 0.0) }).unwrap();
        for _ in 0..700 {
            sim.step().unwrap();
        }
        // a change mid-window waits for the next window
        sim.apply(&Command::SetGradient { gradient: Vec2::zero() }).unwrap();
        let v = sim.capsule().velocity.x;
        sim.step().unwrap();
        assert!(sim.capsule().velocity.x > v);
        assert_eq!(sim.record().applied_gradient, Vec2::new(0.06, 0.0));
    }

    #[test]
    fn clamped_gradient_is_reported() {
        let mut sim = pool();
        let ok = sim.apply(&Command::SetGradient { gradient: Vec2::new(0.0, 0.1) }).unwrap();
        assert!(ok.clamped);
        assert_eq!(ok.applied, Command::SetGradient { gradient: Vec2::new(0.0, 0.06) });
        assert!(sim.apply(&Command::MoveStage { target: Vec2::new(1.0, 0.0) }).is_err());
        assert!(sim.apply(&Command::SetHifu { drive_voltage: 120.0, enabled: true, medium: None }).is_err());
    }

    #[test]
    fn one_frame_per_cycle_at_cycle_timestamps() {
        let mut sim = pool();
        let mut frames = Vec::new();
        for _ in 0..3000 {
            if let Some(f) = sim.step().unwrap().frame {
                frames.push((sim.time(), f.timestamp, f.sequence_index));
            }
        }
        assert_eq!(frames.len(), 3);
        for (n, (emitted, stamp, index)) in frames.into_iter().enumerate() {
            assert_eq!(index, n as u64);
            assert!((stamp - n as f64).abs() < 1e-12);
            assert!((emitted - (n as f64 + 0.68)).abs() < 1e-9);
        }
    }

    #[test]
    fn reset_restores_world_but_not_clock() {
        let mut sim = pool();
        sim.apply(&Command::SetGradient { gradient: Vec2::new(0.06, 0.0) }).unwrap();
        for _ in 0..2000 {
            sim.step().unwrap();
        }
        assert!(sim.capsule().position.x > 0.0);
        sim.apply(&Command::Reset).unwrap();
        assert_eq!(sim.capsule().position, Vec2::zero());
        assert_eq!(sim.step_index(), 2000);
        assert_eq!(sim.commanded_gradient(), Vec2::zero());
    }
}
