//! Planar primitives shared by every module: points, segments, boxes and
//! simple polygons.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Point::new(p[0], p[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Axis-aligned closed rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Half-open membership `[min, max)` in both coordinates.
    pub fn contains_half_open(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x < self.max.x && p.y >= self.min.y && p.y < self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn expand(&self, r: f64) -> Rect {
        Rect::new(self.min - Point::new(r, r), self.max + Point::new(r, r))
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            self.min,
            Point::new(self.max.x, self.min.y),
            self.max,
            Point::new(self.min.x, self.max.y),
        ]
    }

    pub fn bounding(points: impl IntoIterator<Item = Point>) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut r = Rect::new(first, first);
        for p in it {
            r.min.x = r.min.x.min(p.x);
            r.min.y = r.min.y.min(p.y);
            r.max.x = r.max.x.max(p.x);
            r.max.y = r.max.y.max(p.y);
        }
        Some(r)
    }

    /// Whether the closed segment `[a, b]` meets the closed rectangle
    /// (Liang–Barsky clipping).
    pub fn intersects_segment(&self, a: Point, b: Point) -> bool {
        let d = b - a;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        let checks = [
            (-d.x, a.x - self.min.x),
            (d.x, self.max.x - a.x),
            (-d.y, a.y - self.min.y),
            (d.y, self.max.y - a.y),
        ];
        for (p, q) in checks {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let t = q / p;
                if p < 0.0 {
                    if t > t1 {
                        return false;
                    }
                    t0 = t0.max(t);
                } else {
                    if t < t0 {
                        return false;
                    }
                    t1 = t1.min(t);
                }
            }
        }
        t0 <= t1
    }

    /// The part of `[a, b]` inside the rectangle, if any.
    pub fn clip_segment(&self, a: Point, b: Point) -> Option<(Point, Point)> {
        let d = b - a;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        let checks = [
            (-d.x, a.x - self.min.x),
            (d.x, self.max.x - a.x),
            (-d.y, a.y - self.min.y),
            (d.y, self.max.y - a.y),
        ];
        for (p, q) in checks {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let t = q / p;
                if p < 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
            }
        }
        (t0 <= t1).then(|| (a.lerp(b, t0), a.lerp(b, t1)))
    }
}

/// A square `center + [-radius, radius]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center: Point,
    pub radius: f64,
}

impl BoxSpec {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn rect(&self) -> Rect {
        let r = Point::new(self.radius, self.radius);
        Rect::new(self.center - r, self.center + r)
    }

    pub fn contains(&self, p: Point) -> bool {
        self.rect().contains(p)
    }

    pub fn polygon(&self) -> Polygon {
        Polygon::new(self.rect().corners().to_vec())
    }

    /// The box with the same center and `factor` times the radius.
    pub fn scaled(&self, factor: f64) -> BoxSpec {
        BoxSpec::new(self.center, self.radius * factor)
    }
}

/// A simple closed polygon; vertices are stored counterclockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    /// Builds a polygon, reversing the vertex order if it is clockwise.
    pub fn new(mut vertices: Vec<Point>) -> Self {
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Self { vertices }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    pub fn bbox(&self) -> Rect {
        Rect::bounding(self.vertices.iter().copied()).expect("polygon has vertices")
    }

    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Strict interior test. Points on an edge are reported outside; this
    /// combines an exact on-edge check with the half-open crossing rule.
    pub fn contains_strict(&self, p: Point) -> bool {
        if self.edges().any(|(a, b)| on_segment(p, a, b)) {
            return false;
        }
        self.crossing_parity(p)
    }

    /// Closed containment (interior or boundary).
    pub fn contains_closed(&self, p: Point) -> bool {
        self.edges().any(|(a, b)| on_segment(p, a, b)) || self.crossing_parity(p)
    }

    fn crossing_parity(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            // half-open in y: an edge counts when exactly one endpoint is above p
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Whether no two non-adjacent edges intersect and adjacent edges only
    /// share their common vertex.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        if self.area() == 0.0 {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = edges[i];
                let (c, d) = edges[j];
                if adjacent {
                    // shared vertex only: reject collinear overlap (backtracking)
                    let shared = if j == i + 1 { b } else { a };
                    let other_i = if shared == b { a } else { b };
                    let other_j = if shared == c { d } else { c };
                    let u = other_i - shared;
                    let v = other_j - shared;
                    if u.cross(v) == 0.0 && u.dot(v) > 0.0 {
                        return false;
                    }
                } else if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// Index of the edge and parameter where `p` lies on the boundary, within `tol`.
    pub fn locate_on_boundary(&self, p: Point, tol: f64) -> Option<(usize, f64)> {
        self.edges().enumerate().find_map(|(i, (a, b))| {
            if point_segment_distance(p, a, b) <= tol {
                let ab = b - a;
                let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
                Some((i, t))
            } else {
                None
            }
        })
    }
}

pub fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut s = 0.0;
    for i in 0..n {
        s += vertices[i].cross(vertices[(i + 1) % n]);
    }
    0.5 * s
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

pub fn on_segment(p: Point, a: Point, b: Point) -> bool {
    orient(a, b, p) == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

/// Closed segment intersection test.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

/// Bounded planar region: a simple polygon or a Euclidean disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Polygon(Polygon),
    Disk { center: Point, radius: f64 },
}

impl Region {
    pub fn contains_strict(&self, p: Point) -> bool {
        match self {
            Region::Polygon(poly) => poly.contains_strict(p),
            Region::Disk { center, radius } => p.dist(*center) < *radius,
        }
    }

    pub fn contains_closed(&self, p: Point) -> bool {
        match self {
            Region::Polygon(poly) => poly.contains_closed(p),
            Region::Disk { center, radius } => p.dist(*center) <= *radius,
        }
    }

    pub fn bbox(&self) -> Rect {
        match self {
            Region::Polygon(poly) => poly.bbox(),
            Region::Disk { center, radius } => BoxSpec::new(*center, *radius).rect(),
        }
    }

    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        match self {
            Region::Polygon(poly) => poly.distance_to_boundary(p),
            Region::Disk { center, radius } => (p.dist(*center) - radius).abs(),
        }
    }

    /// Distance from a closed rectangle (assumed inside) to the region boundary.
    pub fn rect_clearance(&self, rect: &Rect) -> f64 {
        match self {
            Region::Disk { center, radius } => {
                let far = rect
                    .corners()
                    .iter()
                    .map(|c| c.dist(*center))
                    .fold(0.0, f64::max);
                radius - far
            }
            Region::Polygon(poly) => {
                // min over polygon vertices to rect and rect corners to polygon edges
                let mut best = f64::INFINITY;
                let rect_edges = {
                    let c = rect.corners();
                    [(c[0], c[1]), (c[1], c[2]), (c[2], c[3]), (c[3], c[0])]
                };
                for v in &poly.vertices {
                    for (a, b) in rect_edges {
                        best = best.min(point_segment_distance(*v, a, b));
                    }
                }
                for c in rect.corners() {
                    best = best.min(poly.distance_to_boundary(c));
                }
                best
            }
        }
    }
}
