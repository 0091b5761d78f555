//! Planar geometry shared by the world model, the sampler and the
//! validation pipeline.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Tolerance used for every contact/overlap decision.
pub const EPS: f64 = 1e-9;

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r -= 2.0 * PI;
    }
    r
}

/// A planar pose. Serialized as `[x, y, theta]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl From<[f64; 3]> for Pose2 {
    fn from(a: [f64; 3]) -> Self {
        Pose2::new(a[0], a[1], a[2])
    }
}

impl From<Pose2> for [f64; 3] {
    fn from(p: Pose2) -> Self {
        [p.x, p.y, p.theta]
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 { x, y, theta: wrap_angle(theta) }
    }

    pub fn at(x: f64, y: f64) -> Self {
        Pose2 { x, y, theta: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn dist(&self, o: &Pose2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    /// Heading of the vector from `self` to `o`.
    pub fn heading_to(&self, o: &Pose2) -> f64 {
        (o.y - self.y).atan2(o.x - self.x)
    }

    pub fn lerp(&self, o: &Pose2, t: f64) -> Pose2 {
        Pose2 {
            x: self.x + (o.x - self.x) * t,
            y: self.y + (o.y - self.y) * t,
            theta: self.theta,
        }
    }
}

/// Axis-aligned rectangle given by center and half extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub cx: f64,
    pub cy: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Rect {
    pub fn new(cx: f64, cy: f64, hx: f64, hy: f64) -> Self {
        Rect { cx, cy, hx, hy }
    }

    pub fn min_x(&self) -> f64 {
        self.cx - self.hx
    }
    pub fn max_x(&self) -> f64 {
        self.cx + self.hx
    }
    pub fn min_y(&self) -> f64 {
        self.cy - self.hy
    }
    pub fn max_y(&self) -> f64 {
        self.cy + self.hy
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        (x - self.cx).abs() <= self.hx + EPS && (y - self.cy).abs() <= self.hy + EPS
    }

    /// Disc fully inside the rectangle.
    pub fn contains_disc(&self, x: f64, y: f64, r: f64) -> bool {
        (x - self.cx).abs() + r <= self.hx + EPS && (y - self.cy).abs() + r <= self.hy + EPS
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        o.min_x() >= self.min_x() - EPS
            && o.max_x() <= self.max_x() + EPS
            && o.min_y() >= self.min_y() - EPS
            && o.max_y() <= self.max_y() + EPS
    }

    /// Euclidean distance from a point to the rectangle (0 inside).
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        let dx = ((x - self.cx).abs() - self.hx).max(0.0);
        let dy = ((y - self.cy).abs() - self.hy).max(0.0);
        dx.hypot(dy)
    }

    /// Strict overlap of a disc with the rectangle interior; touching is allowed.
    pub fn overlaps_disc(&self, x: f64, y: f64, r: f64) -> bool {
        self.distance_to(x, y) < r - EPS
    }

    pub fn overlaps_rect(&self, o: &Rect) -> bool {
        (self.cx - o.cx).abs() < self.hx + o.hx - EPS && (self.cy - o.cy).abs() < self.hy + o.hy - EPS
    }

    /// Rectangle shrunk by `m` on every side (may become degenerate).
    pub fn shrink(&self, m: f64) -> Rect {
        Rect::new(self.cx, self.cy, (self.hx - m).max(0.0), (self.hy - m).max(0.0))
    }

    /// The four boundary segments.
    pub fn edges(&self) -> [(Pose2, Pose2); 4] {
        let a = Pose2::at(self.min_x(), self.min_y());
        let b = Pose2::at(self.max_x(), self.min_y());
        let c = Pose2::at(self.max_x(), self.max_y());
        let d = Pose2::at(self.min_x(), self.max_y());
        [(a, b), (b, c), (c, d), (d, a)]
    }
}

/// Distance from point `p` to segment `a`-`b`.
pub fn point_segment_distance(p: &Pose2, a: &Pose2, b: &Pose2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let l2 = dx * dx + dy * dy;
    if l2 <= EPS * EPS {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / l2).clamp(0.0, 1.0);
    (p.x - (a.x + t * dx)).hypot(p.y - (a.y + t * dy))
}

/// Whether segment `a`-`b` keeps a disc of radius `r` sliding along it clear
/// of the rectangle interior. Checked by dense sampling at `r/4` resolution.
pub fn swept_disc_clear(a: &Pose2, b: &Pose2, r: f64, rect: &Rect) -> bool {
    let len = a.dist(b);
    let steps = ((len / (r * 0.25).max(1e-3)).ceil() as usize).max(1);
    (0..=steps).all(|i| {
        let p = a.lerp(b, i as f64 / steps as f64);
        !rect.overlaps_disc(p.x, p.y, r)
    })
}

/// Oriented rectangle from `start` to `end` with half width `half_width`.
/// Models the free space the gripper needs while approaching a target.
#[derive(Debug, Clone, Copy)]
pub struct Corridor {
    pub start: Pose2,
    pub end: Pose2,
    pub half_width: f64,
}

impl Corridor {
    /// Corridor from the gripper start point (at `reach_min` from the base
    /// along the base-to-target ray) to the target.
    pub fn approach(base: &Pose2, target: &Pose2, reach_min: f64, half_width: f64) -> Corridor {
        let h = base.heading_to(target);
        let start = Pose2::at(base.x + reach_min * h.cos(), base.y + reach_min * h.sin());
        Corridor { start, end: *target, half_width }
    }

    fn local(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (dx, dy) = (self.end.x - self.start.x, self.end.y - self.start.y);
        let len = dx.hypot(dy);
        if len <= EPS {
            return (x - self.start.x, y - self.start.y, 0.0);
        }
        let (ux, uy) = (dx / len, dy / len);
        let (px, py) = (x - self.start.x, y - self.start.y);
        (px * ux + py * uy, -px * uy + py * ux, len)
    }

    /// Exact disc/rectangle intersection (strict, contact allowed).
    pub fn intersects_disc(&self, x: f64, y: f64, r: f64) -> bool {
        let (u, v, len) = self.local(x, y);
        let cu = u.clamp(0.0, len);
        let cv = v.clamp(-self.half_width, self.half_width);
        (u - cu).hypot(v - cv) < r - EPS
    }

    /// Whether the center lies in the corridor inflated by `r` on all four
    /// sides. A superset of [`Corridor::intersects_disc`] (the corners are
    /// square rather than rounded).
    pub fn inflated_contains(&self, x: f64, y: f64, r: f64) -> bool {
        let (u, v, len) = self.local(x, y);
        u > -r + EPS && u < len + r - EPS && v.abs() < self.half_width + r - EPS
    }
}
