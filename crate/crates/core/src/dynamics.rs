//! Point-mass capsule dynamics: force summation, linear drag, fixed-step
//! integration and wall contact.

use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::ValidationError;
use crate::hifu::{radiation_force, HifuConfig, HifuState};
use crate::scalar::{Scalar, Vec2};
use crate::sequence::{force_in_phase, GradientCommand, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyState<S: Scalar> {
    pub mass: S,
    pub position: Vec2<S>,
    pub velocity: Vec2<S>,
    /// Touching a wall at the end of the previous step.
    #[serde(default)]
    pub in_contact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsParams<S: Scalar> {
    /// Linear drag, N·s/m. Scenarios take this from the capsule unless the
    /// environment overrides it.
    pub drag: S,
    /// Fraction of tangential velocity kept on a wall impact.
    pub wall_friction_factor: S,
    /// Breakaway force for a capsule at rest on the channel floor, N.
    pub static_friction: S,
    /// Below this speed a capsule whose applied force is under the
    /// breakaway force comes to rest, m/s.
    pub rest_speed: S,
}

impl<S: Scalar> Default for DynamicsParams<S> {
    fn default() -> Self {
        Self {
            drag: S::lit(3.0e-3),
            wall_friction_factor: S::lit(0.7),
            static_friction: S::lit(4.5e-5),
            rest_speed: S::lit(1.0e-4),
        }
    }
}

impl<S: Scalar> DynamicsParams<S> {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.drag > S::zero()) {
            return Err(ValidationError::new("dynamics.drag", "must be > 0"));
        }
        if !(self.wall_friction_factor >= S::zero() && self.wall_friction_factor <= S::one()) {
            return Err(ValidationError::new("dynamics.wall_friction_factor", "must be in [0, 1]"));
        }
        if !(self.static_friction >= S::zero()) {
            return Err(ValidationError::new("dynamics.static_friction", "must be >= 0"));
        }
        if !(self.rest_speed >= S::zero()) {
            return Err(ValidationError::new("dynamics.rest_speed", "must be >= 0"));
        }
        Ok(())
    }
}

/// Outcome of pushing a disc out of the walls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact<S: Scalar> {
    pub position: Vec2<S>,
    pub velocity: Vec2<S>,
    pub touched: bool,
}

/// Projects a disc of `radius` back inside the walls. Any velocity into a
/// touched wall is removed and the remaining tangential part scaled by
/// `friction`.
pub fn resolve_collision<S: Scalar>(
    position: Vec2<S>,
    velocity: Vec2<S>,
    radius: S,
    env: &Environment<S>,
    friction: S,
) -> Contact<S> {
    let mut p = position;
    let mut v = velocity;
    let mut touched = false;
    for _ in 0..8 {
        let mut moved = false;
        for seg in env.segments() {
            let (q, _) = seg.closest_point(p);
            let offset = p - q;
            let d = offset.norm();
            if d >= radius {
                continue;
            }
            let normal = match offset.normalized() {
                Some(n) => n,
                // centre exactly on the wall line: push along the segment normal toward the previous position
                None => {
                    let n = (seg.b - seg.a).perp().normalized().unwrap_or_else(Vec2::unit_x);
                    if (position - q).dot(n) < S::zero() {
                        -n
                    } else {
                        n
                    }
                }
            };
            p = q + normal * radius;
            let vn = v.dot(normal);
            if vn < S::zero() {
                let tangential = v - normal * vn;
                v = tangential * friction;
            }
            touched = true;
            moved = true;
        }
        if !moved {
            break;
        }
    }
    Contact { position: p, velocity: v, touched }
}

/// Semi-implicit Euler step with linear drag, breakaway friction and wall
/// contact. Wall friction acts on impact; a capsule already in contact
/// slides freely along the wall. Returns whether the capsule touched a wall.
pub fn step_dynamics<S: Scalar>(
    body: &mut BodyState<S>,
    force: Vec2<S>,
    dt: S,
    params: &DynamicsParams<S>,
    env: &Environment<S>,
    radius: S,
) -> bool {
    let resting = body.velocity == Vec2::zero();
    let held = force.norm() <= params.static_friction;
    if resting && held {
        return false;
    }
    let accel = (force - body.velocity * params.drag) / body.mass;
    body.velocity += accel * dt;
    let moved = body.position + body.velocity * dt;
    let friction = if body.in_contact { S::one() } else { params.wall_friction_factor };
    let contact = resolve_collision(moved, body.velocity, radius, env, friction);
    body.position = contact.position;
    body.velocity = contact.velocity;
    body.in_contact = contact.touched;
    if held && body.velocity.norm() < params.rest_speed {
        body.velocity = Vec2::zero();
    }
    contact.touched
}

/// External in-plane force on the capsule: duty-cycled magnetic pull plus
/// acoustic radiation force. Drag is applied by the integrator.
pub fn total_force<S: Scalar>(
    phase: Phase,
    capsule_position: Vec2<S>,
    gradient: &GradientCommand<S>,
    moment: S,
    hifu: &HifuState<S>,
    hifu_cfg: &HifuConfig<S>,
) -> Vec2<S> {
    force_in_phase(phase, gradient, moment) + radiation_force(capsule_position, hifu, hifu_cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::open_pool;
    use crate::hifu::Medium;

    const MASS: f64 = 8.055_436_262_885_929e-5;

    fn free() -> DynamicsParams<f64> {
        DynamicsParams { static_friction: 0.0, ..DynamicsParams::default() }
    }

    #[test]
    fn terminal_speed_and_time_constant() {
        let env = open_pool(10.0f64);
        let params = free();
        let mut body = BodyState { mass: MASS, position: Vec2::zero(), velocity: Vec2::zero(), in_contact: false };
        let f = Vec2::new(1.060_287_520_586_555e-4, 0.0);
        let terminal = f.x / params.drag;
        let tau = MASS / params.drag;
        let dt = 1e-3;
        let mut t = 0.0;
        while t < 5.0 * tau {
            step_dynamics(&mut body, f, dt, &params, &env, 2.5e-3);
            t += dt;
        }
        // analytic 1 - e^-5 of terminal speed after 5τ
        assert!((body.velocity.x / terminal - (1.0 - (-5.0f64).exp())).abs() < 0.01);
        while t < 10.0 * tau {
            step_dynamics(&mut body, f, dt, &params, &env, 2.5e-3);
            t += dt;
        }
        assert!((body.velocity.x / terminal - 1.0).abs() < 1e-3);
        assert!((terminal - 3.534e-2).abs() < 1e-5);
    }

    #[test]
    fn stationary_without_force() {
        let env = open_pool(0.1f64);
        let mut body = BodyState { mass: MASS, position: Vec2::new(0.01, 0.0), velocity: Vec2::zero(), in_contact: false };
        for _ in 0..100 {
            step_dynamics(&mut body, Vec2::zero(), 1e-3, &free(), &env, 2.5e-3);
        }
        assert_eq!(body.position, Vec2::new(0.01, 0.0));
    }

    #[test]
    fn breakaway_friction_holds_small_forces() {
        let env = open_pool(0.1f64);
        let params = DynamicsParams::default();
        let mut body = BodyState { mass: MASS, position: Vec2::zero(), velocity: Vec2::zero(), in_contact: false };
        step_dynamics(&mut body, Vec2::new(2.5e-5, 0.0), 1e-3, &params, &env, 2.5e-3);
        assert_eq!(body.velocity, Vec2::zero());
        step_dynamics(&mut body, Vec2::new(1.0e-4, 0.0), 1e-3, &params, &env, 2.5e-3);
        assert!(body.velocity.x > 0.0);
    }

    #[test]
    fn wall_projection_zeroes_normal_velocity() {
        let env = open_pool(0.1f64);
        // centre 1 mm inside the right wall band, moving into it
        let c = resolve_collision(Vec2::new(0.0485, 0.0), Vec2::new(0.02, 0.01), 2.5e-3, &env, 0.7);
        assert!(c.touched);
        assert!((c.position.x - 0.0475).abs() < 1e-12);
        assert_eq!(c.velocity.x, 0.0);
        assert!((c.velocity.y - 0.007).abs() < 1e-12);
        let free = resolve_collision(Vec2::new(0.0, 0.0), Vec2::new(0.02, 0.0), 2.5e-3, &env, 0.7);
        assert!(!free.touched);
        assert_eq!(free.velocity, Vec2::new(0.02, 0.0));
    }

    #[test]
    fn head_on_impact_keeps_only_tangential_motion() {
        let env = open_pool(0.1f64);
        let c = resolve_collision(Vec2::new(0.048, 0.0), Vec2::new(0.03, 0.0), 2.5e-3, &env, 0.7);
        assert_eq!(c.velocity, Vec2::zero());
    }

    #[test]
    fn force_balance_examples() {
        let hifu_cfg = HifuConfig::<f64>::default();
        let off = HifuState::off_at(Vec2::zero(), Medium::WaterOnly);
        let g = GradientCommand::new(Vec2::new(0.06, 0.0), 0.0);
        let moment = 1.767_145_867_644_258_4e-3;
        assert_eq!(total_force(Phase::Imaging, Vec2::zero(), &g, moment, &off, &hifu_cfg), Vec2::zero());
        let f = total_force(Phase::Actuation, Vec2::zero(), &g, moment, &off, &hifu_cfg);
        assert!((f.x - 1.0603e-4).abs() < 1e-8);
        // capsule just left of the focus, pulled right toward it at 2.4 MPa
        let on = HifuState { focus_position: Vec2::zero(), drive_voltage: 100.0, enabled: true, medium: Medium::WaterOnly };
        let net = total_force(Phase::Actuation, Vec2::new(-1e-9, 0.0), &g, moment, &on, &hifu_cfg);
        assert!((net.x - 3.115e-5).abs() < 1e-8, "{net:?}");
    }
}
