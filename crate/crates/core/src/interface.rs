//! The percolation interface `γ_η` on the hexagonal dual lattice.
//!
//! The exploration keeps the directed dual edge `(w, b)` it is crossing,
//! white site `w` on the left and black site `b` on the right. Entering the
//! triangle ahead it looks at the single hexagon `x` opposite the edge: a
//! white `x` replaces `w` (turn right), a black `x` replaces `b` (turn left).
//!
//! ```text
//!            x
//!           / \        white x: next edge is (x, b)
//!          w---b       black x: next edge is (w, x)
//!            ^
//!       current edge
//! ```
//!
//! The walk starts on the dual edge of the boundary edge `a_η`, at its
//! endpoint outside the domain, and ends on the dual edge of `b_η`, again at
//! its outer endpoint.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::lattice::{DualEdge, SiteCoord};
use crate::metrics::Polyline;
use crate::percolation::Coloring;
use std::io::{Read, Write};

/// A directed dual-edge walk, `γ_η`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    pub edges: Vec<DualEdge>,
    pub eta: f64,
}

/// Step-by-step exploration of the interface; stops early when dropped.
pub struct Tracer<'a> {
    coloring: &'a Coloring,
    w: SiteCoord,
    b: SiteCoord,
    k: usize,
    end: (SiteCoord, SiteCoord),
    finished: bool,
    steps: usize,
    limit: usize,
}

impl<'a> Tracer<'a> {
    /// Exploration for the coloring's own boundary condition.
    pub fn new(coloring: &'a Coloring) -> Result<Self> {
        let bc = coloring.boundary_condition().ok_or(Error::NoBoundaryCondition)?;
        let domain = coloring.domain();
        let (w, b) = domain.boundary_edge(bc.a);
        let (end_b, end_w) = domain.boundary_edge(bc.b);
        let k = w.dir_to(b).ok_or_else(|| Error::Trace("boundary edge is not a lattice edge".into()))?;
        let limit = 3 * (domain.num_inner() + domain.num_boundary()) + 6;
        Ok(Self { coloring, w, b, k, end: (end_w, end_b), finished: false, steps: 0, limit })
    }

    /// Sites on the current edge: `(white, black)`.
    pub fn sites(&self) -> (SiteCoord, SiteCoord) {
        (self.w, self.b)
    }
}

impl Iterator for Tracer<'_> {
    type Item = Result<DualEdge>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        let edge = DualEdge { left: self.w, right: self.b };
        if (self.w, self.b) == self.end {
            self.finished = true;
            return Some(Ok(edge));
        }
        self.steps += 1;
        if self.steps > self.limit {
            self.finished = true;
            return Some(Err(Error::Trace("walk exceeded the dual edge count".into())));
        }
        let x = self.w.step(self.k + 1);
        match self.coloring.is_white(x) {
            Some(true) => {
                self.w = x;
                self.k = (self.k + 5) % 6;
            }
            Some(false) => {
                self.b = x;
                self.k = (self.k + 1) % 6;
            }
            None => {
                self.finished = true;
                return Some(Err(Error::Trace(format!("walk left the domain at {x:?}"))));
            }
        }
        Some(Ok(edge))
    }
}

/// Traces `γ_η` from `a_η` to `b_η`. The coloring must carry the `(a, b)`
/// boundary condition.
pub fn trace_interface(coloring: &Coloring, a_label: &str, b_label: &str) -> Result<DiscreteCurve> {
    let domain = coloring.domain();
    let bc = coloring.boundary_condition().ok_or(Error::NoBoundaryCondition)?;
    if domain.marked(a_label)? != bc.a || domain.marked(b_label)? != bc.b {
        return Err(Error::NoBoundaryCondition);
    }
    trace(coloring)
}

/// Traces the interface of the coloring's boundary condition.
pub fn trace(coloring: &Coloring) -> Result<DiscreteCurve> {
    let edges = Tracer::new(coloring)?.collect::<Result<Vec<_>>>()?;
    Ok(DiscreteCurve { edges, eta: coloring.domain().eta() })
}

impl DiscreteCurve {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// `a*_η`.
    pub fn start(&self) -> Point {
        self.edges[0].tail(self.eta)
    }

    /// `b*_η`.
    pub fn end(&self) -> Point {
        self.edges[self.edges.len() - 1].head(self.eta)
    }

    /// The `len() + 1` dual vertices visited, in order.
    pub fn vertices(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.edges.len() + 1);
        if let Some(first) = self.edges.first() {
            out.push(first.tail(self.eta));
        }
        out.extend(self.edges.iter().map(|e| e.head(self.eta)));
        out
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.edges.iter().map(|e| (e.tail(self.eta), e.head(self.eta)))
    }

    pub fn reversed(&self) -> DiscreteCurve {
        DiscreteCurve { edges: self.edges.iter().rev().map(|e| e.reversed()).collect(), eta: self.eta }
    }

    pub fn to_polyline(&self) -> Result<Polyline> {
        Polyline::new(self.vertices())
    }

    /// CSV with columns `step,dual_x,dual_y`, one row per visited dual vertex.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "dual_x", "dual_y"])?;
        for (i, p) in self.vertices().iter().enumerate() {
            w.write_record([i.to_string(), p.x.to_string(), p.y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Binary fixture: magic `PNCV`, `eta` as f64, edge count as u64, then
    /// four i32 per edge (`left.u, left.v, right.u, right.v`), little-endian.
    pub fn write_binary(&self, mut out: impl Write) -> Result<()> {
        out.write_all(b"PNCV")?;
        out.write_all(&self.eta.to_le_bytes())?;
        out.write_all(&(self.edges.len() as u64).to_le_bytes())?;
        for e in &self.edges {
            for x in [e.left.u, e.left.v, e.right.u, e.right.v] {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(mut input: impl Read) -> Result<DiscreteCurve> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"PNCV" {
            return Err(Error::Format("bad curve magic".into()));
        }
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8)?;
        let eta = f64::from_le_bytes(b8);
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut edges = Vec::with_capacity(n.min(1 << 24));
        let mut b4 = [0u8; 4];
        let mut next = |input: &mut dyn Read| -> Result<i32> {
            input.read_exact(&mut b4)?;
            Ok(i32::from_le_bytes(b4))
        };
        for _ in 0..n {
            let left = SiteCoord::new(next(&mut input)?, next(&mut input)?);
            let right = SiteCoord::new(next(&mut input)?, next(&mut input)?);
            edges.push(DualEdge::new(left, right).map_err(|e| Error::Format(e.to_string()))?);
        }
        Ok(DiscreteCurve { edges, eta })
    }
}

/// `γ̂_η`: the walk run at constant speed, `xi` time units per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametrizedCurve {
    pub curve: DiscreteCurve,
    pub xi: f64,
}

pub fn natural_parametrization(curve: DiscreteCurve, xi: f64) -> Result<ParametrizedCurve> {
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::NonPositiveXi(xi));
    }
    Ok(ParametrizedCurve { curve, xi })
}

impl ParametrizedCurve {
    pub fn total_time(&self) -> f64 {
        self.xi * self.curve.len() as f64
    }

    /// Position at time `t`, clamped to `[0, total_time]`.
    pub fn position(&self, t: f64) -> Point {
        let n = self.curve.len();
        let s = (t / self.xi).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let e = self.curve.edges[i];
        e.tail(self.curve.eta).lerp(e.head(self.curve.eta), s - i as f64)
    }

    pub fn to_polyline(&self) -> Result<Polyline> {
        let points = self.curve.vertices();
        let times = (0..points.len()).map(|k| self.xi * k as f64).collect();
        Polyline::with_times(points, times)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{JordanDomainSpec, LatticeDomain};
    use crate::percolation::{Color, RngStream};
    use std::collections::{HashMap, HashSet};
    use std::sync::Arc;

    fn single_site_domain() -> Arc<LatticeDomain> {
        let r = 0.6;
        let at = |deg: f64| {
            let t = deg.to_radians();
            Point::new(r * t.cos(), r * t.sin())
        };
        let spec = JordanDomainSpec::disk(Point::new(0.0, 0.0), r)
            .with_marks(&[("a", at(210.0)), ("b", at(30.0))]);
        Arc::new(LatticeDomain::build(&spec, 1.0).unwrap())
    }

    #[test]
    fn single_site_hand_trace() {
        let d = single_site_domain();
        assert_eq!(d.num_inner(), 1);
        assert_eq!(d.marked("a").unwrap(), 0);
        assert_eq!(d.marked("b").unwrap(), 3);
        let s = SiteCoord::new;
        let white = Coloring::uniform(&d, Color::White).with_boundary("a", "b").unwrap();
        let curve = trace_interface(&white, "a", "b").unwrap();
        let expect = [
            (s(-1, 0), s(0, -1)),
            (s(0, 0), s(0, -1)),
            (s(0, 0), s(1, -1)),
            (s(0, 0), s(1, 0)),
            (s(0, 1), s(1, 0)),
        ];
        let got: Vec<_> = curve.edges.iter().map(|e| (e.left, e.right)).collect();
        assert_eq!(got, expect);

        // all black: the walk hugs the white arc instead
        let black = Coloring::uniform(&d, Color::Black).with_boundary("a", "b").unwrap();
        let curve = trace_interface(&black, "a", "b").unwrap();
        let lefts: HashSet<_> = curve.edges.iter().map(|e| e.left).collect();
        let white_arc: HashSet<_> = d.boundary_arc(3, 0).unwrap().into_iter().collect();
        assert_eq!(lefts, white_arc);
    }

    #[test]
    fn all_white_curve_follows_black_arc() {
        let spec = JordanDomainSpec::named("disk").unwrap();
        let d = Arc::new(LatticeDomain::build(&spec, 0.6).unwrap());
        assert!(d.num_inner() <= 12, "{}", d.num_inner());
        let c = Coloring::uniform(&d, Color::White).with_boundary("a", "c").unwrap();
        let curve = trace_interface(&c, "a", "c").unwrap();
        let rights: HashSet<_> = curve.edges.iter().map(|e| e.right).collect();
        let arc: HashSet<_> =
            d.boundary_arc(d.marked("a").unwrap(), d.marked("c").unwrap()).unwrap().into_iter().collect();
        assert_eq!(rights, arc);
    }

    #[test]
    fn missing_or_mismatched_boundary_condition() {
        let d = single_site_domain();
        let c = Coloring::uniform(&d, Color::White);
        assert!(matches!(trace_interface(&c, "a", "b"), Err(Error::NoBoundaryCondition)));
        let c = c.with_boundary("b", "a").unwrap();
        assert!(matches!(trace_interface(&c, "a", "b"), Err(Error::NoBoundaryCondition)));
    }

    fn check_invariants(c: &Coloring, curve: &DiscreteCurve) {
        let eta = curve.eta;
        for w in curve.edges.windows(2) {
            assert!(w[0].head(eta).dist(w[1].tail(eta)) < 1e-9 * eta);
        }
        let mut seen = HashSet::new();
        let mut visits: HashMap<(i64, i64), usize> = HashMap::new();
        for e in &curve.edges {
            assert!(seen.insert(*e), "repeated directed edge");
            assert_eq!(c.is_white(e.left), Some(true));
            assert_eq!(c.is_white(e.right), Some(false));
            let h = e.head(eta);
            *visits.entry(((h.x / eta * 6.0).round() as i64, (h.y / eta * 6.0).round() as i64)).or_default() += 1;
        }
        assert!(visits.values().all(|&v| v <= 3));
    }

    #[test]
    fn random_samples_satisfy_walk_invariants() {
        let d = Arc::new(LatticeDomain::build(&JordanDomainSpec::named("disk").unwrap(), 0.05).unwrap());
        for t in 0..200 {
            let c = Coloring::sample(&d, RngStream::new(17, t)).with_boundary("a", "c").unwrap();
            let curve = trace_interface(&c, "a", "c").unwrap();
            check_invariants(&c, &curve);
        }
    }

    #[test]
    fn swapped_endpoints_reverse_the_curve() {
        let d = Arc::new(LatticeDomain::build(&JordanDomainSpec::named("disk").unwrap(), 0.12).unwrap());
        for t in 0..1000 {
            let c = Coloring::sample(&d, RngStream::new(23, t));
            let fwd = trace_interface(&c.with_boundary("a", "c").unwrap(), "a", "c").unwrap();
            let back = trace_interface(&c.swapped().with_boundary("c", "a").unwrap(), "c", "a").unwrap();
            assert_eq!(back, fwd.reversed(), "trial {t}");
        }
    }

    #[test]
    fn curve_separates_the_two_arcs() {
        let d = Arc::new(LatticeDomain::build(&JordanDomainSpec::named("square").unwrap(), 0.1).unwrap());
        for t in 0..50 {
            let c = Coloring::sample(&d, RngStream::new(31, t)).with_boundary("a", "c").unwrap();
            let curve = trace(&c).unwrap();
            let cut: HashSet<(SiteCoord, SiteCoord)> = curve
                .edges
                .iter()
                .flat_map(|e| [(e.left, e.right), (e.right, e.left)])
                .collect();
            let bc = c.boundary_condition().unwrap();
            let white_arc = d.boundary_arc(bc.b, bc.a).unwrap();
            let black_arc: HashSet<_> = d.boundary_arc(bc.a, bc.b).unwrap().into_iter().collect();
            let mut seen: HashSet<SiteCoord> = white_arc.iter().copied().collect();
            let mut stack = white_arc.clone();
            while let Some(s) = stack.pop() {
                assert!(!black_arc.contains(&s), "trial {t}");
                for n in s.neighbors() {
                    if c.is_white(n).is_some() && !cut.contains(&(s, n)) && seen.insert(n) {
                        stack.push(n);
                    }
                }
            }
        }
    }

    #[test]
    fn parametrization_contract() {
        let d = single_site_domain();
        let c = Coloring::uniform(&d, Color::White).with_boundary("a", "b").unwrap();
        let mut curve = trace(&c).unwrap();
        // walk back over the last two edges to get seven
        let back = curve.reversed();
        curve.edges.extend_from_slice(&back.edges[..2]);
        assert_eq!(curve.len(), 7);
        let p = natural_parametrization(curve.clone(), 2.0).unwrap();
        assert_eq!(p.total_time(), 14.0);
        assert!(p.position(0.0).dist(curve.start()) < 1e-12);
        assert!(p.position(14.0).dist(curve.end()) < 1e-12);
        let verts = curve.vertices();
        for (k, v) in verts.iter().enumerate() {
            assert!(p.position(2.0 * k as f64).dist(*v) < 1e-12, "vertex {k}");
        }
        assert!(matches!(natural_parametrization(curve.clone(), 0.0), Err(Error::NonPositiveXi(_))));
        assert!(matches!(natural_parametrization(curve, -1.0), Err(Error::NonPositiveXi(_))));
    }

    #[test]
    fn binary_and_csv_export() {
        let d = Arc::new(LatticeDomain::build(&JordanDomainSpec::named("disk").unwrap(), 0.1).unwrap());
        let c = Coloring::sample(&d, RngStream::new(1, 1)).with_boundary("a", "c").unwrap();
        let curve = trace(&c).unwrap();
        let mut buf = Vec::new();
        curve.write_binary(&mut buf).unwrap();
        assert_eq!(DiscreteCurve::read_binary(buf.as_slice()).unwrap(), curve);
        let mut csv = Vec::new();
        curve.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), curve.len() + 2);
        assert!(text.starts_with("step,dual_x,dual_y\n"));
    }
}
