//! Quad crossings, the four-marked-point event `E_η` and its pivotal sites.

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Point, Polygon, Region};
use crate::interface::{trace, DiscreteCurve, Tracer};
use crate::lattice::{Cell, LatticeDomain, SiteCoord};
use crate::percolation::Coloring;
use crate::util::{StampSet, UnionFind};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// A polygonal quad with four boundary marks in counterclockwise order.
/// Side `∂ᵢQ` runs from mark `i − 1` to mark `i` (indices mod 4), so
/// `∂₁Q` and `∂₃Q` are opposite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub vertices: Vec<Point>,
    pub marks: [Point; 4],
}

impl QuadSpec {
    pub fn new(vertices: Vec<Point>, marks: [Point; 4]) -> Result<Self> {
        let q = QuadSpec { vertices: Polygon::new(vertices).vertices, marks };
        q.validate()?;
        Ok(q)
    }

    /// The lattice-aligned 60°/120° rhombus with corners `0, 1, 1 + e₂, e₂`;
    /// `∂₁` is its left side and `∂₃` its right side.
    pub fn rhombus60() -> Self {
        let h = crate::lattice::SQRT3_2;
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.5, h), Point::new(0.5, h)];
        QuadSpec { marks: [v[3], v[0], v[1], v[2]], vertices: v }
    }

    pub fn polygon(&self) -> Polygon {
        Polygon { vertices: self.vertices.clone() }
    }

    fn locate(&self, p: Point) -> Option<(usize, f64)> {
        let poly = self.polygon();
        let bb = poly.bbox();
        let (i, t) = poly.locate_on_boundary(p, 1e-9 * bb.width().max(bb.height()))?;
        // a mark on a vertex belongs to the edge leaving it
        if p == poly.vertices[(i + 1) % poly.vertices.len()] {
            Some(((i + 1) % poly.vertices.len(), 0.0))
        } else {
            Some((i, t))
        }
    }

    pub fn validate(&self) -> Result<()> {
        let poly = self.polygon();
        if !poly.is_simple() {
            return Err(Error::InvalidPolygon("quad polygon is not simple".into()));
        }
        let mut keys = Vec::new();
        for m in &self.marks {
            let (i, t) = self
                .locate(*m)
                .ok_or_else(|| Error::InvalidPolygon("quad mark is not on the boundary".into()))?;
            keys.push(i as f64 + t);
        }
        let descents = (0..4).filter(|&i| keys[i] >= keys[(i + 1) % 4]).count();
        if descents != 1 {
            return Err(Error::InvalidPolygon("quad marks are not distinct and counterclockwise".into()));
        }
        Ok(())
    }

    /// Polyline of side `∂ᵢQ`, `i ∈ 1..=4`.
    pub fn side(&self, i: usize) -> Vec<Point> {
        let n = self.vertices.len();
        let from = self.marks[(i + 3) % 4];
        let to = self.marks[i % 4];
        let (e0, t0) = self.locate(from).expect("validated mark");
        let (e1, t1) = self.locate(to).expect("validated mark");
        let mut out = vec![from];
        if !(e0 == e1 && t1 >= t0) {
            let mut e = e0;
            loop {
                e = (e + 1) % n;
                out.push(self.vertices[e]);
                if e == e1 {
                    break;
                }
            }
        }
        out.push(to);
        out.dedup();
        out
    }
}

fn polyline_distance(p: Point, line: &[Point]) -> f64 {
    line.windows(2).map(|w| point_segment_distance(p, w[0], w[1])).fold(f64::INFINITY, f64::min)
}

/// Quad geometry resolved against a domain: member sites, their adjacency,
/// and which of them touch `∂₁Q` and `∂₃Q`.
#[derive(Debug, Clone)]
pub struct PreparedQuad {
    inner: Vec<u32>,
    adjacency: Vec<[u32; 6]>,
    touch1: Vec<bool>,
    touch3: Vec<bool>,
}

const NONE: u32 = u32::MAX;

impl PreparedQuad {
    pub fn new(domain: &LatticeDomain, quad: &QuadSpec) -> Result<Self> {
        quad.validate()?;
        let poly = quad.polygon();
        let region = domain.region();
        let inside = |p: Point| region.contains_closed(p) || within(region, p, 1e-9 * domain.eta());
        for (a, b) in poly.edges() {
            for k in 0..=64 {
                if !inside(a.lerp(b, k as f64 / 64.0)) {
                    return Err(Error::QuadOutsideDomain);
                }
            }
        }
        let eta = domain.eta();
        let bb = poly.bbox();
        let mut local = std::collections::HashMap::new();
        let mut inner = Vec::new();
        for (i, s) in domain.inner_sites().iter().enumerate() {
            let p = s.position(eta);
            if p.x >= bb.min.x && p.x <= bb.max.x && p.y >= bb.min.y && p.y <= bb.max.y && poly.contains_strict(p) {
                local.insert(*s, inner.len() as u32);
                inner.push(i as u32);
            }
        }
        let sites = domain.inner_sites();
        let adjacency = inner
            .iter()
            .map(|&i| {
                let s = sites[i as usize];
                std::array::from_fn(|k| local.get(&s.step(k)).copied().unwrap_or(NONE))
            })
            .collect();
        let (s1, s3) = (quad.side(1), quad.side(3));
        let tol = eta * (1.0 + 1e-9);
        let touch = |side: &[Point]| -> Vec<bool> {
            inner
                .iter()
                .map(|&i| polyline_distance(sites[i as usize].position(eta), side) <= tol)
                .collect()
        };
        let touch1 = touch(&s1);
        let touch3 = touch(&s3);
        Ok(Self { inner, adjacency, touch1, touch3 })
    }

    pub fn num_sites(&self) -> usize {
        self.inner.len()
    }

    /// Union-find evaluation, for repeated queries with a reused forest.
    pub fn crossing_with(&self, coloring: &Coloring, uf: &mut UnionFind) -> bool {
        let n = self.inner.len();
        uf.reset(n + 2);
        let (src, dst) = (n, n + 1);
        for (l, &i) in self.inner.iter().enumerate() {
            if !coloring.inner_white(i as usize) {
                continue;
            }
            if self.touch1[l] {
                uf.union(l, src);
            }
            if self.touch3[l] {
                uf.union(l, dst);
            }
            for &m in &self.adjacency[l][..3] {
                if m != NONE && coloring.inner_white(self.inner[m as usize] as usize) {
                    uf.union(l, m as usize);
                }
            }
        }
        uf.same(src, dst)
    }

    pub fn crossing(&self, coloring: &Coloring) -> bool {
        let mut seen = vec![false; self.inner.len()];
        let mut queue = VecDeque::new();
        for (l, &i) in self.inner.iter().enumerate() {
            if self.touch1[l] && coloring.inner_white(i as usize) {
                seen[l] = true;
                queue.push_back(l);
            }
        }
        while let Some(l) = queue.pop_front() {
            if self.touch3[l] {
                return true;
            }
            for &m in &self.adjacency[l] {
                if m != NONE && !seen[m as usize] && coloring.inner_white(self.inner[m as usize] as usize) {
                    seen[m as usize] = true;
                    queue.push_back(m as usize);
                }
            }
        }
        false
    }
}

fn within(region: &Region, p: Point, tol: f64) -> bool {
    region.distance_to_boundary(p) <= tol
}

/// `ω_η(Q)`: whether white sites inside `Q` connect `∂₁Q` to `∂₃Q`.
pub fn quad_crossing(coloring: &Coloring, quad: &QuadSpec) -> Result<bool> {
    Ok(PreparedQuad::new(coloring.domain(), quad)?.crossing(coloring))
}

/// Which of the three equivalent descriptions of `E_η` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Definition {
    /// White inner path from `Δ_{b,c}` to `Δ_{d,a}`.
    Connection,
    /// First hit of `Δ_{b,d}` by the `(a, c)` interface.
    InterfaceAc,
    /// First hit of `Δ_{d,b}` by the `(c, a)` interface.
    InterfaceCa,
}

impl TryFrom<u8> for Definition {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Definition::Connection),
            2 => Ok(Definition::InterfaceAc),
            3 => Ok(Definition::InterfaceCa),
            _ => Err(Error::ConfigInvalid(format!("event definition must be 1, 2 or 3, got {n}"))),
        }
    }
}

/// Four marked boundary edges `a_η, b_η, c_η, d_η`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourPoint {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

/// Sites that flip `E_η` when recolored, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PivotalSet {
    pub sites: Vec<SiteCoord>,
}

impl PivotalSet {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

impl FourPoint {
    pub fn resolve(domain: &LatticeDomain, labels: [&str; 4]) -> Result<Self> {
        let e: Vec<usize> = labels.iter().map(|l| domain.marked(l)).collect::<Result<_>>()?;
        for i in 0..4 {
            for j in i + 1..4 {
                if e[i] == e[j] {
                    return Err(Error::MarkedEdgeCollision(format!("`{}` and `{}`", labels[i], labels[j])));
                }
            }
        }
        Ok(Self { a: e[0], b: e[1], c: e[2], d: e[3] })
    }

    /// Four-point event with a one-off scratch set.
    pub fn event(&self, coloring: &Coloring, def: Definition) -> Result<bool> {
        match def {
            Definition::Connection => Ok(self.connected(coloring, &mut StampSet::new(0))),
            Definition::InterfaceAc => self.first_hit(coloring, self.a, self.c, (self.b, self.d), (self.b, self.c)),
            Definition::InterfaceCa => self.first_hit(coloring, self.c, self.a, (self.d, self.b), (self.d, self.a)),
        }
    }

    /// Definition 1, with a reusable visited set.
    pub fn connected(&self, coloring: &Coloring, seen: &mut StampSet) -> bool {
        let domain = coloring.domain();
        seen.reset(domain.num_inner());
        let mut stack: Vec<SiteCoord> = Vec::new();
        let target = |s: SiteCoord| match domain.cell(s) {
            Cell::Boundary(p) => domain.arc_contains(self.d, self.a, p as usize),
            _ => false,
        };
        let starts = domain.boundary_arc(self.b, self.c).expect("distinct marks");
        for s in starts {
            for n in s.neighbors() {
                if target(n) {
                    return true;
                }
                if let Some(i) = domain.inner_index(n) {
                    if coloring.inner_white(i as usize) && seen.insert(i as usize) {
                        stack.push(n);
                    }
                }
            }
        }
        while let Some(s) = stack.pop() {
            for n in s.neighbors() {
                match domain.cell(n) {
                    Cell::Inner(i) => {
                        if coloring.inner_white(i as usize) && seen.insert(i as usize) {
                            stack.push(n);
                        }
                    }
                    Cell::Boundary(p) => {
                        if domain.arc_contains(self.d, self.a, p as usize) {
                            return true;
                        }
                    }
                    Cell::Outside => {}
                }
            }
        }
        false
    }

    /// Traces the `(from, to)` interface until an edge has an endpoint on
    /// `watch`, then reports whether it has one on `hit`.
    fn first_hit(
        &self,
        coloring: &Coloring,
        from: usize,
        to: usize,
        watch: (usize, usize),
        hit: (usize, usize),
    ) -> Result<bool> {
        let domain = coloring.domain();
        let bc = coloring.with_boundary_edges(from, to);
        let on = |s: SiteCoord, arc: (usize, usize)| match domain.cell(s) {
            Cell::Boundary(p) => domain.arc_contains(arc.0, arc.1, p as usize),
            _ => false,
        };
        for edge in Tracer::new(&bc)? {
            let e = edge?;
            if on(e.left, watch) || on(e.right, watch) {
                return Ok(on(e.left, hit) || on(e.right, hit));
            }
        }
        Err(Error::Trace("interface never reached the watched arc".into()))
    }

    /// `(γ¹_η, γ²_η)`: the `(a,b)` and `(c,d)` interfaces when `E_η` holds,
    /// the `(a,d)` and `(c,b)` interfaces otherwise.
    pub fn interfaces(&self, coloring: &Coloring, event: bool) -> Result<(DiscreteCurve, DiscreteCurve)> {
        let (p1, p2) = if event { ((self.a, self.b), (self.c, self.d)) } else { ((self.a, self.d), (self.c, self.b)) };
        Ok((trace(&coloring.with_boundary_edges(p1.0, p1.1))?, trace(&coloring.with_boundary_edges(p2.0, p2.1))?))
    }

    pub fn pivotal(&self, coloring: &Coloring) -> Result<PivotalSet> {
        let event = self.connected(coloring, &mut StampSet::new(0));
        let (g1, g2) = self.interfaces(coloring, event)?;
        Ok(pivotal_from_curves(coloring.domain(), &g1, &g2))
    }
}

/// Inner sites that are endpoints of an edge of each curve.
pub fn pivotal_from_curves(domain: &LatticeDomain, g1: &DiscreteCurve, g2: &DiscreteCurve) -> PivotalSet {
    let mut first = StampSet::new(domain.num_inner());
    for e in &g1.edges {
        for s in [e.left, e.right] {
            if let Some(i) = domain.inner_index(s) {
                first.insert(i as usize);
            }
        }
    }
    let mut both = StampSet::new(domain.num_inner());
    let mut sites = Vec::new();
    for e in &g2.edges {
        for s in [e.left, e.right] {
            if let Some(i) = domain.inner_index(s) {
                if first.contains(i as usize) && both.insert(i as usize) {
                    sites.push(s);
                }
            }
        }
    }
    sites.sort();
    PivotalSet { sites }
}

/// `E_η` under the chosen definition.
pub fn four_point_event(coloring: &Coloring, labels: [&str; 4], def: Definition) -> Result<bool> {
    FourPoint::resolve(coloring.domain(), labels)?.event(coloring, def)
}

/// `𝒫_η` via the interface characterization.
pub fn pivotal_sites(coloring: &Coloring, labels: [&str; 4]) -> Result<PivotalSet> {
    FourPoint::resolve(coloring.domain(), labels)?.pivotal(coloring)
}

/// Sites whose recoloring changes `E_η`, by exhaustive flipping.
pub fn pivotal_by_flipping(coloring: &Coloring, fp: &FourPoint) -> PivotalSet {
    let mut seen = StampSet::new(0);
    let base = fp.connected(coloring, &mut seen);
    let sites = coloring
        .domain()
        .inner_sites()
        .iter()
        .enumerate()
        .filter(|(i, _)| fp.connected(&coloring.flipped(*i), &mut seen) != base)
        .map(|(_, s)| *s)
        .collect::<Vec<_>>();
    let mut sites = sites;
    sites.sort();
    PivotalSet { sites }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::JordanDomainSpec;
    use crate::percolation::{Color, RngStream};
    use std::collections::HashSet;
    use std::sync::Arc;

    fn disk(eta: f64) -> Arc<LatticeDomain> {
        Arc::new(LatticeDomain::build(&JordanDomainSpec::named("disk").unwrap(), eta).unwrap())
    }

    const ABCD: [&str; 4] = ["a", "b", "c", "d"];

    fn square_quad(r: f64) -> QuadSpec {
        let v = vec![Point::new(-r, -r), Point::new(r, -r), Point::new(r, r), Point::new(-r, r)];
        QuadSpec::new(v.clone(), [v[3], v[0], v[1], v[2]]).unwrap()
    }

    #[test]
    fn quad_sides() {
        let q = square_quad(0.5);
        assert_eq!(q.side(1), vec![Point::new(-0.5, 0.5), Point::new(-0.5, -0.5)]);
        assert_eq!(q.side(3), vec![Point::new(0.5, -0.5), Point::new(0.5, 0.5)]);
        let bad = QuadSpec::new(q.vertices.clone(), [q.marks[1], q.marks[0], q.marks[2], q.marks[3]]);
        assert!(bad.is_err());
    }

    #[test]
    fn quad_crossing_trivial_cases() {
        let d = disk(0.05);
        let q = square_quad(0.5);
        assert!(quad_crossing(&Coloring::uniform(&d, Color::White), &q).unwrap());
        assert!(!quad_crossing(&Coloring::uniform(&d, Color::Black), &q).unwrap());
        assert!(matches!(
            quad_crossing(&Coloring::uniform(&d, Color::White), &square_quad(0.9)),
            Err(Error::QuadOutsideDomain)
        ));
    }

    /// Direct BFS over white sites strictly inside the quad.
    fn oracle(c: &Coloring, q: &QuadSpec) -> bool {
        let d = c.domain();
        let poly = q.polygon();
        let eta = d.eta();
        let members: HashSet<SiteCoord> = d
            .inner_sites()
            .iter()
            .filter(|s| poly.contains_strict(s.position(eta)) && c.is_white(**s) == Some(true))
            .copied()
            .collect();
        let near = |s: &SiteCoord, side: &[Point]| polyline_distance(s.position(eta), side) <= eta * (1.0 + 1e-9);
        let (s1, s3) = (q.side(1), q.side(3));
        let mut stack: Vec<SiteCoord> = members.iter().filter(|s| near(s, &s1)).copied().collect();
        let mut seen: HashSet<SiteCoord> = stack.iter().copied().collect();
        while let Some(s) = stack.pop() {
            if near(&s, &s3) {
                return true;
            }
            for n in s.neighbors() {
                if members.contains(&n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        false
    }

    #[test]
    fn checker_pattern_matches_oracle() {
        // lattice-aligned rhombus with corner sites (0,0) and (5,5): 4x4 sites inside
        let d = disk(0.1);
        let corner = |u, v| SiteCoord::new(u, v).position(0.1);
        let v = vec![corner(0, 0), corner(5, 0), corner(5, 5), corner(0, 5)];
        let q = QuadSpec::new(v.clone(), [v[3], v[0], v[1], v[2]]).unwrap();
        let pq = PreparedQuad::new(&d, &q).unwrap();
        assert_eq!(pq.num_sites(), 16);
        for phase in 0..3 {
            let c = Coloring::from_fn(&d, |s| (s.u + 2 * s.v + phase).rem_euclid(3) != 0);
            let expect = oracle(&c, &q);
            assert_eq!(pq.crossing(&c), expect);
            assert_eq!(pq.crossing_with(&c, &mut UnionFind::new(0)), expect);
        }
    }

    #[test]
    fn random_crossings_match_oracle_and_are_monotone() {
        let d = disk(0.04);
        let q = square_quad(0.5);
        let pq = PreparedQuad::new(&d, &q).unwrap();
        let mut uf = UnionFind::new(0);
        for t in 0..200 {
            let c = Coloring::sample(&d, RngStream::new(77, t));
            let x = pq.crossing(&c);
            assert_eq!(x, oracle(&c, &q));
            assert_eq!(x, pq.crossing_with(&c, &mut uf));
            if x {
                let more = Coloring::sample(&d, RngStream::new(78, t));
                let bits: Vec<bool> = (0..d.num_inner()).map(|i| c.inner_white(i) || more.inner_white(i)).collect();
                let sites = d.inner_sites();
                let up = Coloring::from_fn(&d, |s| bits[sites.binary_search_by_key(&(s.v, s.u), |x| (x.v, x.u)).unwrap()]);
                assert!(pq.crossing(&up));
            }
        }
    }

    #[test]
    fn four_point_trivial_cases() {
        let d = disk(1.0 / 16.0);
        for def in [Definition::Connection, Definition::InterfaceAc, Definition::InterfaceCa] {
            assert!(four_point_event(&Coloring::uniform(&d, Color::White), ABCD, def).unwrap());
            assert!(!four_point_event(&Coloring::uniform(&d, Color::Black), ABCD, def).unwrap());
        }
    }

    #[test]
    fn definitions_agree_on_random_samples() {
        let d = disk(1.0 / 16.0);
        let fp = FourPoint::resolve(&d, ABCD).unwrap();
        for t in 0..2000 {
            let c = Coloring::sample(&d, RngStream::new(5, t));
            let e1 = fp.event(&c, Definition::Connection).unwrap();
            assert_eq!(fp.event(&c, Definition::InterfaceAc).unwrap(), e1, "trial {t}");
            assert_eq!(fp.event(&c, Definition::InterfaceCa).unwrap(), e1, "trial {t}");
        }
    }

    #[test]
    fn collision_is_rejected() {
        let at = |deg: f64| Point::new(deg.to_radians().cos(), deg.to_radians().sin());
        let spec = JordanDomainSpec::named("disk")
            .unwrap()
            .with_marks(&[("a", at(-80.0)), ("b", at(-79.5)), ("c", at(90.0)), ("d", at(180.0))]);
        let d = Arc::new(LatticeDomain::build(&spec, 0.9).unwrap());
        assert!(matches!(FourPoint::resolve(&d, ABCD), Err(Error::MarkedEdgeCollision(_))));
        let c = Coloring::uniform(&d, Color::White);
        assert!(matches!(pivotal_sites(&c, ABCD), Err(Error::MarkedEdgeCollision(_))));
    }

    #[test]
    fn all_white_has_no_pivotal_sites() {
        let d = disk(0.125);
        let c = Coloring::uniform(&d, Color::White);
        let fp = FourPoint::resolve(&d, ABCD).unwrap();
        assert!(pivotal_by_flipping(&c, &fp).is_empty());
        assert!(fp.pivotal(&c).unwrap().is_empty());
    }

    #[test]
    fn pivotal_sets_match_flip_oracle() {
        let d = disk(0.125);
        let fp = FourPoint::resolve(&d, ABCD).unwrap();
        for t in 0..300 {
            let c = Coloring::sample(&d, RngStream::new(8, t));
            assert_eq!(fp.pivotal(&c).unwrap(), pivotal_by_flipping(&c, &fp), "trial {t}");
        }
    }

    #[test]
    fn pivotal_symmetries() {
        let d = disk(0.125);
        let fp = FourPoint::resolve(&d, ABCD).unwrap();
        let rotated = FourPoint::resolve(&d, ["b", "c", "d", "a"]).unwrap();
        for t in 0..200 {
            let c = Coloring::sample(&d, RngStream::new(9, t));
            let p = fp.pivotal(&c).unwrap();
            assert_eq!(rotated.pivotal(&c.swapped()).unwrap(), p, "trial {t}");
            let e = fp.connected(&c, &mut StampSet::new(0));
            let (g1, g2) = fp.interfaces(&c, e).unwrap();
            assert_eq!(pivotal_from_curves(&d, &g2, &g1), p);
        }
    }
}
