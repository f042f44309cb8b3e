//! Planar primitives shared by the world, stage and imaging code.

use serde::{Deserialize, Serialize};

use crate::scalar::{Scalar, Vec2};

/// Axis-aligned rectangle, serialized as `{ min = [x, y], max = [x, y] }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect<S: Scalar> {
    pub min: Vec2<S>,
    pub max: Vec2<S>,
}

impl<S: Scalar> Rect<S> {
    pub fn new(min: Vec2<S>, max: Vec2<S>) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Vec2<S>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> S {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> S {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vec2<S> {
        (self.min + self.max) * S::lit(0.5)
    }

    pub fn expanded(&self, margin: S) -> Self {
        let m = Vec2::new(margin, margin);
        Self::new(self.min - m, self.max + m)
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.max.x > self.min.x && self.max.y > self.min.y
    }

    /// Smallest rectangle containing every point; `None` for an empty set.
    pub fn bounding<I: IntoIterator<Item = Vec2<S>>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut r = Self::new(first, first);
        for p in it {
            r.min.x = r.min.x.min(p.x);
            r.min.y = r.min.y.min(p.y);
            r.max.x = r.max.x.max(p.x);
            r.max.y = r.max.y.max(p.y);
        }
        Some(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<S: Scalar> {
    pub a: Vec2<S>,
    pub b: Vec2<S>,
}

impl<S: Scalar> Segment<S> {
    pub fn new(a: Vec2<S>, b: Vec2<S>) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> S {
        self.a.distance(self.b)
    }

    /// Closest point on the segment to `p` and its parameter in `[0, 1]`.
    pub fn closest_point(&self, p: Vec2<S>) -> (Vec2<S>, S) {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        if !(len2 > S::zero()) {
            return (self.a, S::zero());
        }
        let t = ((p - self.a).dot(ab) / len2).max(S::zero()).min(S::one());
        (self.a + ab * t, t)
    }

    pub fn distance_to(&self, p: Vec2<S>) -> S {
        self.closest_point(p).0.distance(p)
    }
}

/// Edges of a closed polygon, including the closing edge.
pub fn polygon_edges<S: Scalar>(points: &[Vec2<S>]) -> impl Iterator<Item = Segment<S>> + '_ {
    let n = points.len();
    (0..n).map(move |i| Segment::new(points[i], points[(i + 1) % n]))
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon<S: Scalar>(points: &[Vec2<S>], p: Vec2<S>) -> bool {
    let n = points.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (points[i], points[j]);
        if (pi.y > p.y) != (pj.y > p.y) {
            let x = pj.x + (p.y - pj.y) / (pi.y - pj.y) * (pi.x - pj.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Signed area, positive for counter-clockwise winding.
pub fn polygon_area<S: Scalar>(points: &[Vec2<S>]) -> S {
    polygon_edges(points).map(|e| e.a.cross(e.b)).sum::<S>() / S::lit(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closest_point_clamps_to_ends() {
        let s = Segment::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
        assert_eq!(s.closest_point(Vec2::new(2.0, 1.0)).0, Vec2::new(1.0, 0.0));
        assert_eq!(s.closest_point(Vec2::new(0.5, 1.0)).0, Vec2::new(0.5, 0.0));
        assert_eq!(s.distance_to(Vec2::new(-3.0, 4.0)), 5.0);
    }

    #[test]
    fn square_membership_and_area() {
        let sq = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)];
        assert!(point_in_polygon(&sq, Vec2::new(0.5, 0.5)));
        assert!(!point_in_polygon(&sq, Vec2::new(1.5, 0.5)));
        assert_eq!(polygon_area(&sq), 1.0);
    }
}
