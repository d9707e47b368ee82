//! Distances between curves: the reparametrization-invariant `d_U` (the
//! continuous Fréchet distance for polylines) and the time-aware `ρ`.

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point>,
    times: Option<Vec<f64>>,
}

impl Polyline {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidPolyline(format!("need at least 2 points, got {}", points.len())));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidPolyline("non-finite coordinate".into()));
        }
        Ok(Self { points, times: None })
    }

    /// Times must start at 0 and increase strictly.
    pub fn with_times(points: Vec<Point>, times: Vec<f64>) -> Result<Self> {
        let mut line = Self::new(points)?;
        if times.len() != line.points.len() {
            return Err(Error::InvalidPolyline("one time per point is required".into()));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPolyline("times must start at 0 and increase".into()));
        }
        line.times = Some(times);
        Ok(line)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    pub fn duration(&self) -> Option<f64> {
        self.times.as_ref().map(|t| t[t.len() - 1])
    }

    /// Position at time `t` (clamped), for timed polylines.
    pub fn at_time(&self, t: f64) -> Result<Point> {
        let times = self.times.as_ref().ok_or(Error::MissingTimes)?;
        let t = t.clamp(0.0, times[times.len() - 1]);
        let i = match times.partition_point(|&x| x <= t) {
            0 => 0,
            k => (k - 1).min(times.len() - 2),
        };
        let f = (t - times[i]) / (times[i + 1] - times[i]);
        Ok(self.points[i].lerp(self.points[i + 1], f.clamp(0.0, 1.0)))
    }

    pub fn translated(&self, v: Point) -> Polyline {
        Polyline { points: self.points.iter().map(|p| *p + v).collect(), times: self.times.clone() }
    }

    /// Rotation by `angle` about the origin followed by translation by `v`.
    pub fn rigid_motion(&self, angle: f64, v: Point) -> Polyline {
        let (s, c) = angle.sin_cos();
        let points = self.points.iter().map(|p| Point::new(c * p.x - s * p.y + v.x, s * p.x + c * p.y + v.y)).collect();
        Polyline { points, times: self.times.clone() }
    }
}

/// Parameter interval of segment `a→b` within distance `eps` of `c`.
fn free_interval(a: Point, b: Point, c: Point, eps: f64) -> Option<(f64, f64)> {
    let d = b - a;
    let f = a - c;
    let qa = d.dot(d);
    let qb = 2.0 * f.dot(d);
    let qc = f.dot(f) - eps * eps;
    if qa == 0.0 {
        return (qc <= 0.0).then_some((0.0, 1.0));
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let lo = ((-qb - sq) / (2.0 * qa)).max(0.0);
    let hi = ((-qb + sq) / (2.0 * qa)).min(1.0);
    (lo <= hi).then_some((lo, hi))
}

/// Free-space decision: is the Fréchet distance at most `eps`?
pub fn frechet_at_most(p: &[Point], q: &[Point], eps: f64) -> bool {
    let (n, m) = (p.len() - 1, q.len() - 1);
    if p[0].dist(q[0]) > eps || p[n].dist(q[m]) > eps {
        return false;
    }
    // lr[i][j]: reachable part of the left side of cell (i, j), along q's segment j
    // br[i][j]: reachable part of the bottom side of cell (i, j), along p's segment i
    let mut lr = vec![None; (n + 1) * m];
    let mut br = vec![None; n * (m + 1)];
    let li = |i: usize, j: usize| i * m + j;
    let bi = |i: usize, j: usize| i * (m + 1) + j;
    for j in 0..m {
        let prev_ok = j == 0 || matches!(lr[li(0, j - 1)], Some((_, hi)) if hi >= 1.0);
        if prev_ok {
            lr[li(0, j)] = free_interval(q[j], q[j + 1], p[0], eps).filter(|&(lo, _)| lo <= 0.0);
        }
        if lr[li(0, j)].is_none() {
            break;
        }
    }
    for i in 0..n {
        let prev_ok = i == 0 || matches!(br[bi(i - 1, 0)], Some((_, hi)) if hi >= 1.0);
        if prev_ok {
            br[bi(i, 0)] = free_interval(p[i], p[i + 1], q[0], eps).filter(|&(lo, _)| lo <= 0.0);
        }
        if br[bi(i, 0)].is_none() {
            break;
        }
    }
    for i in 0..n {
        for j in 0..m {
            let left = lr[li(i, j)];
            let bottom = br[bi(i, j)];
            if left.is_none() && bottom.is_none() {
                continue;
            }
            let top = free_interval(p[i], p[i + 1], q[j + 1], eps);
            br[bi(i, j + 1)] = match (left, bottom) {
                (Some(_), _) => top,
                (None, Some((blo, _))) => top.and_then(|(lo, hi)| {
                    let lo = lo.max(blo);
                    (lo <= hi).then_some((lo, hi))
                }),
                _ => None,
            };
            let right = free_interval(q[j], q[j + 1], p[i + 1], eps);
            lr[li(i + 1, j)] = match (bottom, left) {
                (Some(_), _) => right,
                (None, Some((llo, _))) => right.and_then(|(lo, hi)| {
                    let lo = lo.max(llo);
                    (lo <= hi).then_some((lo, hi))
                }),
                _ => None,
            };
        }
    }
    matches!(lr[li(n, m - 1)], Some((_, hi)) if hi >= 1.0)
        || matches!(br[bi(n - 1, m)], Some((_, hi)) if hi >= 1.0)
}

/// `d_U` for polylines: the continuous Fréchet distance, found by bisection
/// on the free-space decision down to `1e-12` of the joint diameter.
pub fn du_distance(c1: &Polyline, c2: &Polyline) -> f64 {
    let (p, q) = (c1.points(), c2.points());
    let lo0 = p[0].dist(q[0]).max(p[p.len() - 1].dist(q[q.len() - 1]));
    if frechet_at_most(p, q, lo0) {
        return lo0;
    }
    let bbox = Rect::bounding(p.iter().chain(q).copied()).expect("nonempty");
    let diam = bbox.width().hypot(bbox.height());
    let (mut lo, mut hi) = (lo0, lo0.max(diam));
    while hi - lo > 1e-12 * diam.max(f64::MIN_POSITIVE) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if frechet_at_most(p, q, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Discrete Fréchet distance over vertices only; an upper bound on `d_U`.
pub fn discrete_frechet(c1: &Polyline, c2: &Polyline) -> f64 {
    let (p, q) = (c1.points(), c2.points());
    let m = q.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for (i, pi) in p.iter().enumerate() {
        for j in 0..m {
            let d = pi.dist(q[j]);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]),
            };
            cur[j] = d.max(best);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// `ρ(c1, c2) = |T₂ − T₁| + sup_s |c1(s·T₁) − c2(s·T₂)|`. The difference is
/// linear between merged breakpoints, so the supremum is attained at one.
pub fn rho_distance(c1: &Polyline, c2: &Polyline) -> Result<f64> {
    let t1 = c1.times().ok_or(Error::MissingTimes)?;
    let t2 = c2.times().ok_or(Error::MissingTimes)?;
    let (d1, d2) = (t1[t1.len() - 1], t2[t2.len() - 1]);
    let mut s: Vec<f64> = t1.iter().map(|t| t / d1).chain(t2.iter().map(|t| t / d2)).collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    let mut sup = 0.0f64;
    for si in s {
        let d = c1.at_time(si * d1)?.dist(c2.at_time(si * d2)?);
        sup = sup.max(d);
    }
    Ok((d2 - d1).abs() + sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(pts: &[(f64, f64)]) -> Polyline {
        Polyline::new(pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    fn timed(pts: &[(f64, f64)], times: &[f64]) -> Polyline {
        Polyline::with_times(pts.iter().map(|&(x, y)| Point::new(x, y)).collect(), times.to_vec()).unwrap()
    }

    #[test]
    fn identical_and_subdivided_curves_are_at_distance_zero() {
        let c = line(&[(0.0, 0.0), (1.0, 0.5), (2.0, -1.0)]);
        assert_eq!(du_distance(&c, &c), 0.0);
        let sub = line(&[(0.0, 0.0), (0.5, 0.25), (1.0, 0.5), (1.25, 0.125), (1.5, -0.25), (2.0, -1.0)]);
        assert!(du_distance(&c, &sub) < 1e-9);
    }

    #[test]
    fn parallel_segments_are_at_their_offset() {
        for h in [0.1, 0.5, 2.0] {
            let a = line(&[(0.0, 0.0), (1.0, 0.0)]);
            let b = line(&[(0.0, h), (1.0, h)]);
            assert!((du_distance(&a, &b) - h).abs() < 1e-9, "{h}");
            assert!(frechet_at_most(a.points(), b.points(), h + 1e-9));
            assert!(!frechet_at_most(a.points(), b.points(), h - 1e-9));
        }
    }

    #[test]
    fn backtracking_costs_half_the_detour() {
        // Q goes 0 → 2 → 1 → 3 on a line: any monotone matching of P = 0 → 3 must
        // hold a point of P between 1 and 2 while Q doubles back, costing 1/2.
        let p = line(&[(0.0, 0.0), (3.0, 0.0)]);
        let q = line(&[(0.0, 0.0), (2.0, 0.0), (1.0, 0.0), (3.0, 0.0)]);
        assert!((du_distance(&p, &q) - 0.5).abs() < 1e-9);
        assert!(discrete_frechet(&p, &q) >= du_distance(&p, &q));
    }

    #[test]
    fn rho_trivial_examples() {
        let c = timed(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)], &[0.0, 0.5, 2.0]);
        assert_eq!(rho_distance(&c, &c).unwrap(), 0.0);
        let p1 = timed(&[(0.3, 0.3), (0.3, 0.3)], &[0.0, 1.0]);
        let p2 = timed(&[(0.3, 0.3), (0.3, 0.3)], &[0.0, 2.0]);
        assert_eq!(rho_distance(&p1, &p2).unwrap(), 1.0);
        let v = Point::new(0.3, -0.4);
        assert!((rho_distance(&c, &c.translated(v)).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(rho_distance(&c, &line(&[(0.0, 0.0), (1.0, 0.0)])), Err(Error::MissingTimes)));
    }

    #[test]
    fn rho_is_exact_between_breakpoints() {
        // c1 moves right at unit speed, c2 sits still; the gap peaks at s = 1
        let c1 = timed(&[(0.0, 0.0), (1.0, 0.0)], &[0.0, 1.0]);
        let c2 = timed(&[(0.0, 0.0), (0.0, 0.0), (0.0, 0.0)], &[0.0, 0.3, 1.0]);
        assert!((rho_distance(&c1, &c2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_polylines() {
        assert!(Polyline::new(vec![Point::new(0.0, 0.0)]).is_err());
        let pts = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
        assert!(Polyline::with_times(pts.clone(), vec![0.0, 0.0]).is_err());
        assert!(Polyline::with_times(pts.clone(), vec![0.5, 1.0]).is_err());
        assert!(Polyline::with_times(pts, vec![0.0]).is_err());
    }

    fn arb_polyline() -> impl Strategy<Value = Polyline> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..7)
            .prop_map(|v| Polyline::new(v.into_iter().map(|(x, y)| Point::new(x, y)).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn du_is_symmetric(a in arb_polyline(), b in arb_polyline()) {
            prop_assert!((du_distance(&a, &b) - du_distance(&b, &a)).abs() < 1e-8);
        }

        #[test]
        fn du_triangle_inequality(a in arb_polyline(), b in arb_polyline(), c in arb_polyline()) {
            prop_assert!(du_distance(&a, &c) <= du_distance(&a, &b) + du_distance(&b, &c) + 1e-8);
        }

        #[test]
        fn du_bounded_by_rho_sup_term(a in arb_polyline(), b in arb_polyline()) {
            let ta: Vec<f64> = (0..a.points().len()).map(|i| i as f64).collect();
            let tb: Vec<f64> = (0..b.points().len()).map(|i| i as f64 * 0.7).collect();
            let (da, db) = (ta[ta.len() - 1], tb[tb.len() - 1]);
            let at = Polyline::with_times(a.points().to_vec(), ta).unwrap();
            let bt = Polyline::with_times(b.points().to_vec(), tb).unwrap();
            let sup = rho_distance(&at, &bt).unwrap() - (da - db).abs();
            prop_assert!(du_distance(&a, &b) <= sup + 1e-8);
        }

        #[test]
        fn rho_invariant_under_rigid_motion(a in arb_polyline(), b in arb_polyline(), angle in 0.0f64..6.3, vx in -2.0f64..2.0, vy in -2.0f64..2.0) {
            let ta: Vec<f64> = (0..a.points().len()).map(|i| i as f64).collect();
            let tb: Vec<f64> = (0..b.points().len()).map(|i| i as f64 * 1.3).collect();
            let at = Polyline::with_times(a.points().to_vec(), ta).unwrap();
            let bt = Polyline::with_times(b.points().to_vec(), tb).unwrap();
            let v = Point::new(vx, vy);
            let moved = rho_distance(&at.rigid_motion(angle, v), &bt.rigid_motion(angle, v)).unwrap();
            prop_assert!((moved - rho_distance(&at, &bt).unwrap()).abs() < 1e-9);
        }
    }
}
