//! World geometry: closed wall outlines, named regions and the built-in
//! channel generators.

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::geometry::{point_in_polygon, polygon_edges, Rect, Segment};
use crate::scalar::{Scalar, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionRole {
    Start,
    Goal,
    Target,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionShape<S: Scalar> {
    Disc { center: Vec2<S>, radius: S },
    Polygon { points: Vec<Vec2<S>> },
}

impl<S: Scalar> RegionShape<S> {
    pub fn contains(&self, p: Vec2<S>) -> bool {
        match self {
            RegionShape::Disc { center, radius } => (p - *center).norm_squared() <= *radius * *radius,
            RegionShape::Polygon { points } => point_in_polygon(points, p),
        }
    }

    pub fn anchor(&self) -> Vec2<S> {
        match self {
            RegionShape::Disc { center, .. } => *center,
            RegionShape::Polygon { points } => {
                points.iter().copied().sum::<Vec2<S>>() / S::lit(points.len().max(1) as f64)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region<S: Scalar> {
    pub name: String,
    pub role: RegionRole,
    pub shape: RegionShape<S>,
}

impl<S: Scalar> Region<S> {
    pub fn disc(name: impl Into<String>, role: RegionRole, center: Vec2<S>, radius: S) -> Self {
        Self { name: name.into(), role, shape: RegionShape::Disc { center, radius } }
    }

    pub fn contains(&self, p: Vec2<S>) -> bool {
        self.shape.contains(p)
    }
}

/// Navigable world: the inside of the closed wall outlines (even-odd rule).
#[derive(Debug, Clone, PartialEq)]
pub struct Environment<S: Scalar> {
    pub walls: Vec<Vec<Vec2<S>>>,
    pub channel_width: S,
    pub regions: Vec<Region<S>>,
    pub fluid_label: String,
    /// Reference path along the channel, when the world has one.
    pub centerline: Option<Vec<Vec2<S>>>,
    segments: Vec<Segment<S>>,
}

impl<S: Scalar> Environment<S> {
    pub fn new(
        walls: Vec<Vec<Vec2<S>>>,
        channel_width: S,
        regions: Vec<Region<S>>,
        fluid_label: impl Into<String>,
        centerline: Option<Vec<Vec2<S>>>,
    ) -> Self {
        let segments = walls.iter().flat_map(|w| polygon_edges(w).collect::<Vec<_>>()).collect();
        Self { walls, channel_width, regions, fluid_label: fluid_label.into(), centerline, segments }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.walls.is_empty() {
            return Err(ValidationError::new("environment.walls", "at least one closed outline is required"));
        }
        for (i, w) in self.walls.iter().enumerate() {
            if w.len() < 3 || w.iter().any(|p| !p.is_finite()) {
                return Err(ValidationError::new(
                    format!("environment.walls[{i}]"),
                    "outline needs at least 3 finite points",
                ));
            }
        }
        if !(self.channel_width > S::zero()) {
            return Err(ValidationError::new("environment.channel_width", "must be > 0"));
        }
        let mut names = std::collections::BTreeSet::new();
        for r in &self.regions {
            if !names.insert(r.name.as_str()) {
                return Err(ValidationError::new(format!("regions.{}", r.name), "region names must be unique"));
            }
            if let RegionShape::Disc { radius, .. } = r.shape {
                if !(radius > S::zero()) {
                    return Err(ValidationError::new(format!("regions.{}.radius", r.name), "must be > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> &[Segment<S>] {
        &self.segments
    }

    pub fn is_navigable(&self, p: Vec2<S>) -> bool {
        self.walls.iter().filter(|w| point_in_polygon(w, p)).count() % 2 == 1
    }

    pub fn distance_to_walls(&self, p: Vec2<S>) -> S {
        self.segments.iter().map(|s| s.distance_to(p)).fold(S::infinity(), S::min)
    }

    pub fn bounds(&self) -> Rect<S> {
        Rect::bounding(self.walls.iter().flatten().copied())
            .unwrap_or_else(|| Rect::new(Vec2::zero(), Vec2::new(S::one(), S::one())))
    }

    pub fn region(&self, name: &str) -> Option<&Region<S>> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn regions_with_role(&self, role: RegionRole) -> impl Iterator<Item = &Region<S>> {
        self.regions.iter().filter(move |r| r.role == role)
    }

    pub fn centerline_length(&self) -> Option<S> {
        self.centerline.as_ref().map(|c| polyline_length(c))
    }

    /// Arc length of the centerline point nearest to `p`.
    pub fn centerline_progress(&self, p: Vec2<S>) -> Option<S> {
        self.centerline.as_ref().map(|c| project_onto_polyline(c, p).0)
    }
}

pub fn polyline_length<S: Scalar>(points: &[Vec2<S>]) -> S {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Arc length and distance of the polyline point closest to `p`.
pub fn project_onto_polyline<S: Scalar>(points: &[Vec2<S>], p: Vec2<S>) -> (S, S) {
    let mut best = (S::zero(), S::infinity());
    let mut walked = S::zero();
    for w in points.windows(2) {
        let seg = Segment::new(w[0], w[1]);
        let (q, t) = seg.closest_point(p);
        let d = q.distance(p);
        if d < best.1 {
            best = (walked + t * seg.length(), d);
        }
        walked += seg.length();
    }
    best
}

/// Point at arc length `s` along the polyline, clamped to its ends.
pub fn point_along<S: Scalar>(points: &[Vec2<S>], s: S) -> Vec2<S> {
    let mut remaining = s.max(S::zero());
    for w in points.windows(2) {
        let len = w[0].distance(w[1]);
        if remaining <= len && len > S::zero() {
            return w[0] + (w[1] - w[0]) * (remaining / len);
        }
        remaining -= len;
    }
    *points.last().expect("non-empty polyline")
}

/// Closed outline of a channel of width `width` around `centerline`, with
/// square end caps pushed out by `cap` beyond both ends.
pub fn channel_outline<S: Scalar>(centerline: &[Vec2<S>], width: S, cap: S) -> Vec<Vec2<S>> {
    assert!(centerline.len() >= 2, "channel needs at least two centerline points");
    let n = centerline.len();
    let first_dir = (centerline[1] - centerline[0]).normalized().unwrap_or_else(Vec2::unit_x);
    let last_dir = (centerline[n - 1] - centerline[n - 2]).normalized().unwrap_or_else(Vec2::unit_x);
    let mut path = Vec::with_capacity(n + 2);
    path.push(centerline[0] - first_dir * cap);
    path.extend_from_slice(centerline);
    path.push(centerline[n - 1] + last_dir * cap);

    let half = width / S::lit(2.0);
    let m = path.len();
    let mut left = Vec::with_capacity(m);
    let mut right = Vec::with_capacity(m);
    for i in 0..m {
        let d_in = if i > 0 { (path[i] - path[i - 1]).normalized() } else { None };
        let d_out = if i + 1 < m { (path[i + 1] - path[i]).normalized() } else { None };
        let (n_in, n_out) = match (d_in, d_out) {
            (Some(a), Some(b)) => (a.perp(), b.perp()),
            (Some(a), None) => (a.perp(), a.perp()),
            (None, Some(b)) => (b.perp(), b.perp()),
            (None, None) => (Vec2::new(S::zero(), S::one()), Vec2::new(S::zero(), S::one())),
        };
        let miter = (n_in + n_out).normalized().unwrap_or(n_out);
        let scale = half / miter.dot(n_out).max(S::lit(0.2));
        left.push(path[i] + miter * scale);
        right.push(path[i] - miter * scale);
    }
    right.reverse();
    left.extend(right);
    left
}

/// Serpentine centerline: `legs` straight runs along ±x joined by
/// semicircular folds of radius `fold_radius`, stacked in +y.
pub fn serpentine_centerline<S: Scalar>(leg_length: S, legs: usize, fold_radius: S, arc_segments: usize) -> Vec<Vec2<S>> {
    let mut pts = vec![Vec2::zero()];
    let two = S::lit(2.0);
    for leg in 0..legs {
        let y = S::lit(leg as f64) * two * fold_radius;
        let forward = leg % 2 == 0;
        let x_end = if forward { leg_length } else { S::zero() };
        pts.push(Vec2::new(x_end, y));
        if leg + 1 == legs {
            break;
        }
        let center = Vec2::new(x_end, y + fold_radius);
        for k in 1..=arc_segments {
            let frac = S::lit(k as f64 / arc_segments as f64);
            // forward legs turn counter-clockwise around the right end, backward legs clockwise around the left end
            let angle = if forward {
                -S::FRAC_PI_2() + frac * S::PI()
            } else {
                S::lit(1.5) * S::PI() - frac * S::PI()
            };
            pts.push(center + Vec2::new(angle.cos(), angle.sin()) * fold_radius);
        }
    }
    pts
}

/// Folded intestine of total centerline length `length` with `folds` U-turns.
pub fn spiral_intestine<S: Scalar>(length: S, folds: usize, channel_width: S, fold_radius: S, cap: S) -> Environment<S> {
    let legs = folds + 1;
    let leg_length = (length - S::lit(folds as f64) * S::PI() * fold_radius) / S::lit(legs as f64);
    let centerline = serpentine_centerline(leg_length, legs, fold_radius, 24);
    let outline = channel_outline(&centerline, channel_width, cap);
    let start = centerline[0];
    let goal = *centerline.last().unwrap();
    let regions = vec![
        Region::disc("start", RegionRole::Start, start, channel_width / S::lit(2.0)),
        Region::disc("goal", RegionRole::Goal, goal, channel_width / S::lit(2.0)),
    ];
    Environment::new(vec![outline], channel_width, regions, "ringer_solution", Some(centerline))
}

/// U-shaped gel channel with `targets` evenly spaced target discs along it.
pub fn u_channel<S: Scalar>(
    leg_length: S,
    turn_radius: S,
    channel_width: S,
    targets: usize,
    target_radius: S,
    cap: S,
) -> Environment<S> {
    let centerline = serpentine_centerline(leg_length, 2, turn_radius, 36);
    let outline = channel_outline(&centerline, channel_width, cap);
    let total = polyline_length(&centerline);
    let mut regions = vec![Region::disc("start", RegionRole::Start, centerline[0], channel_width / S::lit(2.0))];
    for k in 1..=targets {
        let s = total * S::lit(k as f64 / (targets + 1) as f64);
        regions.push(Region::disc(format!("target_{k}"), RegionRole::Target, point_along(&centerline, s), target_radius));
    }
    Environment::new(vec![outline], channel_width, regions, "water", Some(centerline))
}

/// Square pool of side `size` centred on the origin.
pub fn open_pool<S: Scalar>(size: S) -> Environment<S> {
    let h = size / S::lit(2.0);
    let outline = vec![Vec2::new(-h, -h), Vec2::new(h, -h), Vec2::new(h, h), Vec2::new(-h, h)];
    let regions = vec![Region::disc("start", RegionRole::Start, Vec2::zero(), S::lit(2.5e-3))];
    Environment::new(vec![outline], size, regions, "water", None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spiral_centerline_is_half_a_metre() {
        let env = spiral_intestine(0.5f64, 4, 8.0e-3, 8.0e-3, 4.0e-3);
        let len = env.centerline_length().unwrap();
        // chords of the discretised folds fall slightly short of the true arcs
        assert!((len - 0.5).abs() < 2.0e-4, "{len}");
        env.validate().unwrap();
        let c = env.centerline.as_ref().unwrap();
        for w in c.windows(2) {
            let mid = (w[0] + w[1]) * 0.5;
            assert!(env.is_navigable(mid));
            assert!((env.distance_to_walls(mid) - 4.0e-3).abs() < 1.0e-4);
        }
    }

    #[test]
    fn neighbouring_legs_are_separated_by_tissue() {
        let env = spiral_intestine(0.5f64, 4, 8.0e-3, 8.0e-3, 4.0e-3);
        assert!(env.is_navigable(Vec2::new(0.04, 0.0)));
        assert!(!env.is_navigable(Vec2::new(0.04, 8.0e-3)));
        assert!(env.is_navigable(Vec2::new(0.04, 16.0e-3)));
    }

    #[test]
    fn u_channel_targets_are_disjoint_and_inside() {
        let env = u_channel(0.06f64, 0.015, 8.0e-3, 4, 0.012, 4.0e-3);
        let targets: Vec<_> = env.regions_with_role(RegionRole::Target).collect();
        assert_eq!(targets.len(), 4);
        for (i, a) in targets.iter().enumerate() {
            assert!(env.is_navigable(a.shape.anchor()));
            for b in &targets[i + 1..] {
                assert!(a.shape.anchor().distance(b.shape.anchor()) > 0.024);
            }
        }
    }

    #[test]
    fn progress_projection() {
        let line = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)];
        assert_eq!(project_onto_polyline(&line, Vec2::new(0.5, 0.2)).0, 0.5);
        assert_eq!(project_onto_polyline(&line, Vec2::new(1.2, 0.5)).0, 1.5);
        assert_eq!(point_along(&line, 1.25), Vec2::new(1.0, 0.25));
        assert_eq!(point_along(&line, 9.0), Vec2::new(1.0, 1.0));
    }

    #[test]
    fn pool_membership() {
        let env = open_pool(0.1f64);
        assert!(env.is_navigable(Vec2::new(0.049, 0.0)));
        assert!(!env.is_navigable(Vec2::new(0.051, 0.0)));
        assert!((env.distance_to_walls(Vec2::zero()) - 0.05).abs() < 1e-15);
    }
}
