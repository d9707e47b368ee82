//! The face induced by an interface at a box.
//!
//! An edge qualifies when both of its hexagons lie in the closed box.
//! `σ̲` and `σ̄` are the first and last qualifying edges. The domain
//! `D_η(B, Ω)` is the connected component containing the box of the inner
//! sites whose hexagon does not touch the curve before `σ̲` or after `σ̄`.

use crate::arms::{AnnulusSpec, ArmGeometry, ArmPattern, ArmScratch};
use crate::error::{Error, Result};
use crate::geometry::{BoxSpec, Point, Polygon};
use crate::interface::DiscreteCurve;
use crate::lattice::{LatticeDomain, SiteCoord};
use crate::percolation::Coloring;
use crate::util::StampSet;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedFace {
    pub occurred: bool,
    /// Index of the first qualifying edge.
    pub first_time: usize,
    /// Index of the last qualifying edge.
    pub last_time: usize,
    /// Sites of `D_η(B, Ω)`, sorted.
    pub region_sites: Vec<SiteCoord>,
    /// Entry point `x₁` and exit point `x₂` on the box.
    pub marked: Option<(Point, Point)>,
}

impl InducedFace {
    fn empty() -> Self {
        Self { occurred: false, first_time: 0, last_time: 0, region_sites: Vec::new(), marked: None }
    }
}

pub fn check_box(domain: &LatticeDomain, b: &BoxSpec) -> Result<()> {
    let rect = b.rect();
    let region = domain.region();
    if !(b.radius > 0.0) || !rect.corners().iter().all(|c| region.contains_strict(*c)) || region.rect_clearance(&rect) <= 0.0 {
        return Err(Error::BoxOutsideDomain);
    }
    Ok(())
}

/// Builds the face induced by `curve` (an interface of `domain`) at `b`.
pub fn induced_face(domain: &LatticeDomain, curve: &DiscreteCurve, b: &BoxSpec) -> Result<InducedFace> {
    check_box(domain, b)?;
    let eta = domain.eta();
    let in_box = |s: SiteCoord| b.contains(s.position(eta));
    let qualifying = |i: &usize| {
        let e = curve.edges[*i];
        in_box(e.left) && in_box(e.right)
    };
    let Some(first) = (0..curve.len()).find(qualifying) else {
        return Ok(InducedFace::empty());
    };
    let last = (0..curve.len()).rev().find(qualifying).expect("a qualifying edge exists");

    let n = domain.num_inner();
    let mut excluded = StampSet::new(n);
    for e in curve.edges[..first].iter().chain(&curve.edges[last + 1..]) {
        for s in [e.left, e.right, e.head_site(), e.tail_site()] {
            if let Some(i) = domain.inner_index(s) {
                excluded.insert(i as usize);
            }
        }
    }

    let sites = domain.inner_sites();
    let core: Vec<usize> = (0..n).filter(|&i| in_box(sites[i]) && sites[i].neighbors().iter().all(|m| in_box(*m))).collect();
    let seeds: Vec<usize> = if core.is_empty() {
        (0..n).filter(|&i| in_box(sites[i]) && !excluded.contains(i)).collect()
    } else {
        core
    };
    let mut seen = StampSet::new(n);
    let mut queue: VecDeque<usize> = VecDeque::new();
    for s in seeds {
        if !excluded.contains(s) && seen.insert(s) {
            queue.push_back(s);
        }
    }
    let mut region = Vec::new();
    while let Some(i) = queue.pop_front() {
        region.push(sites[i]);
        for m in sites[i].neighbors() {
            if let Some(j) = domain.inner_index(m) {
                let j = j as usize;
                if !excluded.contains(j) && seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
    }
    region.sort();
    Ok(InducedFace {
        occurred: true,
        first_time: first,
        last_time: last,
        region_sites: region,
        marked: Some((curve.edges[first].tail(eta), curve.edges[last].head(eta))),
    })
}

/// `G(B, U)`: the face occurred and its domain lies in `u`.
pub fn event_g(face: &InducedFace, u: &Polygon, eta: f64) -> bool {
    face.occurred && face.region_sites.iter().all(|s| u.contains_closed(s.position(eta)))
}

/// The annulus `U \ B` for the three-arm event.
pub fn face_annulus(b: &BoxSpec, u: &Polygon) -> AnnulusSpec {
    AnnulusSpec::Polygons { inner: b.polygon(), outer: u.clone() }
}

/// Per-sample indicators for the face bound: `(A, G, three-arm in U \ B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceSample {
    pub a: bool,
    pub g: bool,
    pub three_arm: bool,
}

/// Prepared face-bound probe: box, `U`, and the annulus geometry between them.
pub struct FaceProbe {
    pub boxspec: BoxSpec,
    pub u: Polygon,
    annulus: ArmGeometry,
    index: Vec<u32>,
}

impl FaceProbe {
    pub fn new(domain: &LatticeDomain, boxspec: BoxSpec, u: Polygon) -> Result<Self> {
        check_box(domain, &boxspec)?;
        let annulus = ArmGeometry::new(&face_annulus(&boxspec, &u), domain.eta())?;
        let index = annulus
            .sites()
            .iter()
            .map(|s| domain.inner_index(*s).ok_or(Error::AnnulusOutsideDomain))
            .collect::<Result<_>>()?;
        Ok(Self { boxspec, u, annulus, index })
    }

    pub fn sample(&self, coloring: &Coloring, curve: &DiscreteCurve, scratch: &mut ArmScratch) -> Result<FaceSample> {
        let domain = coloring.domain();
        let face = induced_face(domain, curve, &self.boxspec)?;
        let mut out = Vec::new();
        self.annulus.evaluate(
            &mut |i| coloring.inner_white(self.index[i] as usize),
            &[ArmPattern::preset(3)],
            scratch,
            &mut out,
        );
        Ok(FaceSample { a: face.occurred, g: event_g(&face, &self.u, domain.eta()), three_arm: out[0] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_segment_distance;
    use crate::interface::trace_interface;
    use crate::lattice::JordanDomainSpec;
    use crate::percolation::RngStream;
    use std::sync::Arc;

    fn square(eta: f64) -> Arc<LatticeDomain> {
        let spec = JordanDomainSpec::square(BoxSpec::new(Point::new(0.5, 0.5), 0.5));
        Arc::new(LatticeDomain::build(&spec, eta).unwrap())
    }

    fn sample(domain: &Arc<LatticeDomain>, t: u64) -> (Coloring, DiscreteCurve) {
        let c = Coloring::sample(domain, RngStream::new(31, t)).with_boundary("d", "b").unwrap();
        let curve = trace_interface(&c, "d", "b").unwrap();
        (c, curve)
    }

    /// Flood fill over sites whose hexagon (circumradius `η/√3`) keeps away from the
    /// removed polyline pieces, measured geometrically.
    fn oracle_region(domain: &LatticeDomain, curve: &DiscreteCurve, b: &BoxSpec, first: usize, last: usize) -> Vec<SiteCoord> {
        let eta = domain.eta();
        let hex = eta / 3f64.sqrt() * (1.0 + 1e-6);
        let pieces: Vec<(Point, Point)> = curve
            .segments()
            .enumerate()
            .filter(|(i, _)| *i < first || *i > last)
            .map(|(_, s)| s)
            .collect();
        let free = |s: &SiteCoord| pieces.iter().all(|(a, c)| point_segment_distance(s.position(eta), *a, *c) > hex);
        let inner: std::collections::BTreeSet<SiteCoord> = domain.inner_sites().iter().copied().filter(free).collect();
        let deep = |s: &SiteCoord| b.contains(s.position(eta)) && s.neighbors().iter().all(|m| b.contains(m.position(eta)));
        let mut out: std::collections::BTreeSet<SiteCoord> = inner.iter().copied().filter(deep).collect();
        let mut stack: Vec<SiteCoord> = out.iter().copied().collect();
        while let Some(s) = stack.pop() {
            for m in s.neighbors() {
                if inner.contains(&m) && out.insert(m) {
                    stack.push(m);
                }
            }
        }
        out.into_iter().collect()
    }

    #[test]
    fn disjoint_curve_gives_empty_face() {
        let domain = square(1.0 / 16.0);
        let b = BoxSpec::new(Point::new(0.5, 0.85), 0.06);
        let c = Coloring::uniform(&domain, crate::percolation::Color::White).with_boundary("d", "b").unwrap();
        let curve = trace_interface(&c, "d", "b").unwrap();
        let face = induced_face(&domain, &curve, &b).unwrap();
        assert!(!face.occurred);
        assert!(face.region_sites.is_empty());
        assert!(!event_g(&face, &b.polygon(), domain.eta()));
    }

    #[test]
    fn region_matches_flood_fill() {
        let domain = square(1.0 / 10.0);
        let b = BoxSpec::new(Point::new(0.5, 0.5), 0.2);
        let mut occurred = 0;
        for t in 0..300 {
            let (_, curve) = sample(&domain, t);
            let face = induced_face(&domain, &curve, &b).unwrap();
            if !face.occurred {
                continue;
            }
            occurred += 1;
            assert!(face.first_time <= face.last_time);
            assert_eq!(face.region_sites, oracle_region(&domain, &curve, &b, face.first_time, face.last_time), "trial {t}");
            let deep = domain
                .inner_sites()
                .iter()
                .filter(|s| b.contains(s.position(0.1)) && s.neighbors().iter().all(|m| b.contains(m.position(0.1))));
            for s in deep {
                assert!(face.region_sites.binary_search(s).is_ok());
            }
        }
        assert!(occurred > 50);
    }

    #[test]
    fn box_covering_domain() {
        let domain = square(1.0 / 8.0);
        let b = BoxSpec::new(Point::new(0.5, 0.5), 0.499);
        for t in 0..50 {
            let (_, curve) = sample(&domain, t);
            let face = induced_face(&domain, &curve, &b).unwrap();
            let eta = domain.eta();
            let inside = |i: usize| b.contains(curve.edges[i].left.position(eta)) && b.contains(curve.edges[i].right.position(eta));
            if inside(0) {
                assert_eq!(face.first_time, 0);
            }
            assert!(event_g(&face, &BoxSpec::new(Point::new(0.5, 0.5), 0.5).polygon(), eta) == face.occurred);
        }
    }

    #[test]
    fn g_on_whole_domain_and_box() {
        let domain = square(1.0 / 16.0);
        let b = BoxSpec::new(Point::new(0.5, 0.5), 0.1);
        let whole = BoxSpec::new(Point::new(0.5, 0.5), 0.5).polygon();
        let mut strict = 0;
        for t in 0..200 {
            let (_, curve) = sample(&domain, t);
            let face = induced_face(&domain, &curve, &b).unwrap();
            assert_eq!(event_g(&face, &whole, domain.eta()), face.occurred);
            let larger = face.region_sites.iter().any(|s| !b.contains(s.position(domain.eta())));
            if face.occurred && larger {
                strict += 1;
                assert!(!event_g(&face, &b.polygon(), domain.eta()));
            }
        }
        assert!(strict > 0);
    }

    #[test]
    fn g_is_monotone_in_u() {
        let domain = square(1.0 / 16.0);
        let b = BoxSpec::new(Point::new(0.5, 0.5), 0.1);
        let us: Vec<Polygon> = [0.15, 0.2, 0.3, 0.45].iter().map(|r| BoxSpec::new(Point::new(0.5, 0.5), *r).polygon()).collect();
        for t in 0..200 {
            let (_, curve) = sample(&domain, t);
            let face = induced_face(&domain, &curve, &b).unwrap();
            let g: Vec<bool> = us.iter().map(|u| event_g(&face, u, domain.eta())).collect();
            for w in g.windows(2) {
                assert!(!w[0] || w[1]);
            }
        }
    }

    #[test]
    fn no_three_arms_implies_g() {
        let domain = square(1.0 / 32.0);
        let probe = FaceProbe::new(
            &domain,
            BoxSpec::new(Point::new(0.5, 0.5), 1.0 / 16.0),
            BoxSpec::new(Point::new(0.5, 0.5), 3.0 / 16.0).polygon(),
        )
        .unwrap();
        let mut scratch = ArmScratch::default();
        let mut escaped = 0;
        for t in 0..1500 {
            let (c, curve) = sample(&domain, t);
            let s = probe.sample(&c, &curve, &mut scratch).unwrap();
            assert!(!(s.a && !s.three_arm) || s.g, "trial {t}: {s:?}");
            escaped += (s.a && !s.g) as usize;
        }
        assert!(escaped > 0);
    }

    #[test]
    fn box_outside_domain() {
        let domain = square(1.0 / 8.0);
        let (_, curve) = sample(&domain, 0);
        let err = induced_face(&domain, &curve, &BoxSpec::new(Point::new(0.9, 0.5), 0.2));
        assert!(matches!(err, Err(Error::BoxOutsideDomain)));
    }
}
