//! Arm events in annuli and Monte Carlo estimates of `α_k`.
//!
//! Annulus sites are lattice sites in the closed outer region and outside
//! the closed inner region. A site touches `∂₁A` if it has a lattice
//! neighbor in the inner region (or, when the inner region holds no site,
//! lies within `η` of it) and touches `∂₂A` if it has a neighbor outside the
//! outer region. An arm is a monochromatic site path in the annulus from a
//! `∂₁A` site to a `∂₂A` site.
//!
//! Detection explores the clusters of `∂₁A` sites. Arms in different
//! clusters are disjoint; within a cluster the largest number of disjoint
//! arms is a unit vertex-capacity max-flow, computed only as far as needed.
//! Between two distinct crossing clusters of one color there is always a
//! crossing of the other color, so `2m` alternating arms exist exactly when
//! there are at least `m` crossing clusters of each color.

use crate::error::{Error, Result};
use crate::geometry::{BoxSpec, Point, Polygon, Rect};
use crate::lattice::{LatticeDomain, SiteCoord, SQRT3_2};
use crate::percolation::{Color, Coloring, RngStream};
use crate::util::StampSet;
use std::collections::HashMap;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnulusSpec {
    /// `B_R(z) \ B_r(z)`.
    Boxes { inner: BoxSpec, outer: BoxSpec },
    /// Outer polygon minus inner polygon.
    Polygons { inner: Polygon, outer: Polygon },
    /// Arms from the site nearest `center` to the boundary of `B_radius(center)`;
    /// `∂₁A` is the six neighbors of that site.
    SiteToRadius { center: Point, radius: f64 },
}

impl AnnulusSpec {
    pub fn boxes(center: Point, r: f64, big_r: f64) -> Self {
        AnnulusSpec::Boxes { inner: BoxSpec::new(center, r), outer: BoxSpec::new(center, big_r) }
    }

    pub fn site_to_radius(center: Point, radius: f64) -> Self {
        AnnulusSpec::SiteToRadius { center, radius }
    }

    fn validate(&self) -> Result<()> {
        match self {
            AnnulusSpec::Boxes { inner, outer } => {
                let (i, o) = (inner.rect(), outer.rect());
                if !(inner.radius >= 0.0 && i.min.x > o.min.x && i.min.y > o.min.y && i.max.x < o.max.x && i.max.y < o.max.y) {
                    return Err(Error::InvalidAnnulus("inner box must lie strictly inside the outer box".into()));
                }
            }
            AnnulusSpec::Polygons { inner, outer } => {
                if !inner.is_simple() || !outer.is_simple() {
                    return Err(Error::InvalidAnnulus("annulus polygons must be simple".into()));
                }
                let strictly_inside = inner.vertices.iter().all(|v| outer.contains_strict(*v))
                    && inner.edges().all(|(a, b)| {
                        outer.edges().all(|(c, d)| !crate::geometry::segments_intersect(a, b, c, d))
                    });
                if !strictly_inside {
                    return Err(Error::InvalidAnnulus("inner polygon must lie strictly inside the outer one".into()));
                }
            }
            AnnulusSpec::SiteToRadius { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidAnnulus("radius must be positive".into()));
                }
            }
        }
        Ok(())
    }

    fn outer_bbox(&self) -> Rect {
        match self {
            AnnulusSpec::Boxes { outer, .. } => outer.rect(),
            AnnulusSpec::Polygons { outer, .. } => outer.bbox(),
            AnnulusSpec::SiteToRadius { center, radius } => BoxSpec::new(*center, *radius).rect(),
        }
    }
}

/// Arm color condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmPattern {
    /// `k` arms alternating in color around the annulus (`k` even).
    Alternating(usize),
    /// `k` disjoint arms, at least one of each color.
    NotAllSame(usize),
    /// `k` disjoint arms of one color.
    Monochromatic(Color, usize),
}

impl ArmPattern {
    /// Default color condition for `k` arms: alternating for `k = 4`, not all
    /// the same color otherwise.
    pub fn preset(k: usize) -> Self {
        if k == 4 {
            ArmPattern::Alternating(4)
        } else {
            ArmPattern::NotAllSame(k)
        }
    }

    /// A cyclic color sequence; only monochromatic and alternating
    /// sequences are supported.
    pub fn from_sequence(colors: &[Color]) -> Result<Self> {
        let k = colors.len();
        if k == 0 {
            return Err(Error::UnsupportedPattern("empty color sequence".into()));
        }
        if colors.iter().all(|c| *c == colors[0]) {
            return Ok(ArmPattern::Monochromatic(colors[0], k));
        }
        if k % 2 == 0 && (0..k).all(|i| colors[i] != colors[(i + 1) % k]) {
            return Ok(ArmPattern::Alternating(k));
        }
        Err(Error::UnsupportedPattern(format!("{colors:?}")))
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "alternating4" => return Ok(ArmPattern::Alternating(4)),
            "not-all-same" => return Err(Error::UnsupportedPattern("`not-all-same` needs an arm count, e.g. `not-all-same:3`".into())),
            _ => {}
        }
        if let Some(k) = text.strip_prefix("not-all-same:") {
            let k = k.parse().map_err(|_| Error::UnsupportedPattern(text.into()))?;
            return Ok(ArmPattern::NotAllSame(k));
        }
        let colors = text
            .chars()
            .map(|c| match c {
                'W' | 'w' => Ok(Color::White),
                'B' | 'b' => Ok(Color::Black),
                _ => Err(Error::UnsupportedPattern(text.into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_sequence(&colors)
    }

    pub fn arms(&self) -> usize {
        match self {
            ArmPattern::Alternating(k) | ArmPattern::NotAllSame(k) | ArmPattern::Monochromatic(_, k) => *k,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ArmPattern::Alternating(k) => format!("alternating{k}"),
            ArmPattern::NotAllSame(k) => format!("not-all-same:{k}"),
            ArmPattern::Monochromatic(Color::White, k) => "W".repeat(*k),
            ArmPattern::Monochromatic(Color::Black, k) => "B".repeat(*k),
        }
    }
}

const NONE: u32 = u32::MAX;
/// Adjacency entry for a neighbor in the inner region.
const HOLE: u32 = u32::MAX - 1;
/// Adjacency entry for a neighbor outside the outer region.
const EXTERIOR: u32 = u32::MAX;
const TILE_U: i32 = 64;
const TILE_V: i32 = 32;

/// An annulus resolved on `ηT`.
#[derive(Debug, Clone)]
pub struct ArmGeometry {
    eta: f64,
    sites: Vec<SiteCoord>,
    adjacency: Vec<[u32; 6]>,
    t_in: Vec<bool>,
    t_out: Vec<bool>,
    starts: Vec<u32>,
    ring: Option<Ring>,
    rng_index: Vec<u32>,
    rng_chunks: usize,
}

/// Triangles with one inner-region vertex and two annulus vertices, in
/// counterclockwise order around the inner region. Entry `(p, q)` has `q`
/// counterclockwise of `p`.
#[derive(Debug, Clone)]
struct Ring {
    tri: Vec<(u32, u32)>,
    index: HashMap<(u32, u32), u32>,
}

impl ArmGeometry {
    pub fn new(spec: &AnnulusSpec, eta: f64) -> Result<Self> {
        spec.validate()?;
        let center_site = match spec {
            AnnulusSpec::SiteToRadius { center, .. } => Some(SiteCoord::nearest(*center, eta)),
            _ => None,
        };
        let in_outer = |p: Point| match spec {
            AnnulusSpec::Boxes { outer, .. } => outer.contains(p),
            AnnulusSpec::Polygons { outer, .. } => outer.contains_closed(p),
            AnnulusSpec::SiteToRadius { center, radius } => BoxSpec::new(*center, *radius).contains(p),
        };
        let in_inner = |s: SiteCoord, p: Point| match spec {
            AnnulusSpec::Boxes { inner, .. } => inner.contains(p),
            AnnulusSpec::Polygons { inner, .. } => inner.contains_closed(p),
            AnnulusSpec::SiteToRadius { .. } => Some(s) == center_site,
        };

        let bb = spec.outer_bbox();
        let row = eta * SQRT3_2;
        let vmin = (bb.min.y / row).floor() as i32 - 1;
        let vmax = (bb.max.y / row).ceil() as i32 + 1;
        let umin = (bb.min.x / eta - 0.5 * vmax as f64).floor() as i32 - 1;
        let umax = (bb.max.x / eta - 0.5 * vmin as f64).ceil() as i32 + 1;
        let width = (umax - umin + 1) as usize;
        let height = (vmax - vmin + 1) as usize;
        let cell = |s: SiteCoord| -> Option<usize> {
            let (du, dv) = (s.u - umin, s.v - vmin);
            (du >= 0 && dv >= 0 && (du as usize) < width && (dv as usize) < height)
                .then(|| dv as usize * width + du as usize)
        };

        let mut local = vec![NONE; width * height];
        let mut sites = Vec::new();
        let mut inner_sites = 0usize;
        for v in vmin..=vmax {
            for u in umin..=umax {
                let s = SiteCoord::new(u, v);
                let p = s.position(eta);
                if !in_outer(p) {
                    continue;
                }
                if in_inner(s, p) {
                    inner_sites += 1;
                    continue;
                }
                local[cell(s).expect("in grid")] = sites.len() as u32;
                sites.push(s);
            }
        }
        if sites.is_empty() {
            return Err(Error::InvalidAnnulus("annulus holds no lattice site".into()));
        }
        let adjacency: Vec<[u32; 6]> = sites
            .iter()
            .map(|s| {
                std::array::from_fn(|k| {
                    let n = s.step(k);
                    match cell(n).map(|c| local[c]) {
                        Some(i) if i != NONE => i,
                        _ => {
                            let p = n.position(eta);
                            if in_outer(p) && in_inner(n, p) {
                                HOLE
                            } else {
                                EXTERIOR
                            }
                        }
                    }
                })
            })
            .collect();

        let inner_dist = |p: Point| -> f64 {
            match spec {
                AnnulusSpec::Boxes { inner, .. } => {
                    let r = inner.rect();
                    let dx = (r.min.x - p.x).max(p.x - r.max.x).max(0.0);
                    let dy = (r.min.y - p.y).max(p.y - r.max.y).max(0.0);
                    dx.hypot(dy)
                }
                AnnulusSpec::Polygons { inner, .. } => {
                    if inner.contains_closed(p) {
                        0.0
                    } else {
                        inner.distance_to_boundary(p)
                    }
                }
                AnnulusSpec::SiteToRadius { .. } => f64::INFINITY,
            }
        };
        let t_in: Vec<bool> = sites
            .iter()
            .map(|s| {
                if inner_sites > 0 {
                    s.neighbors().iter().any(|n| in_inner(*n, n.position(eta)))
                } else {
                    inner_dist(s.position(eta)) <= eta * (1.0 + 1e-9)
                }
            })
            .collect();
        let t_out: Vec<bool> =
            sites.iter().map(|s| s.neighbors().iter().any(|n| !in_outer(n.position(eta)))).collect();
        if !t_in.iter().any(|&b| b) {
            return Err(Error::InvalidAnnulus("no site touches the inner boundary".into()));
        }

        // color bits are read in 64x32 tiles so that a cluster touches few generator chunks
        let tiles_u = (width as i32 + TILE_U - 1) / TILE_U;
        let tiles_v = (height as i32 + TILE_V - 1) / TILE_V;
        let rng_index = sites
            .iter()
            .map(|s| {
                let (du, dv) = (s.u - umin, s.v - vmin);
                let tile = (dv / TILE_V) * tiles_u + du / TILE_U;
                (tile * TILE_U * TILE_V + (dv % TILE_V) * TILE_U + du % TILE_U) as u32
            })
            .collect();
        let mut starts: Vec<u32> = (0..sites.len() as u32).filter(|&i| t_in[i as usize]).collect();
        let c = bb.min.lerp(bb.max, 0.5);
        starts.sort_by(|&a, &b| {
            let pa = sites[a as usize].position(eta) - c;
            let pb = sites[b as usize].position(eta) - c;
            pa.y.atan2(pa.x).total_cmp(&pb.y.atan2(pb.x))
        });
        let ring = build_ring(&sites, &adjacency, &t_in, eta);
        Ok(Self {
            eta,
            sites,
            adjacency,
            t_in,
            t_out,
            starts,
            ring,
            rng_index,
            rng_chunks: (tiles_u * tiles_v) as usize,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn sites(&self) -> &[SiteCoord] {
        &self.sites
    }

    pub fn touches_inner(&self, i: usize) -> bool {
        self.t_in[i]
    }

    pub fn touches_outer(&self, i: usize) -> bool {
        self.t_out[i]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i].iter().filter(|&&m| m < HOLE).map(|&m| m as usize)
    }

    /// Inner-boundary sites ordered by angle about the annulus center.
    pub fn starts(&self) -> &[u32] {
        &self.starts
    }

    /// Crossing clusters for the coloring given by `white(local index)`.
    pub fn explore(&self, white: &mut impl FnMut(usize) -> bool, scratch: &mut ArmScratch) -> Crossings {
        let n = self.sites.len();
        scratch.seen.reset(n);
        scratch.members.clear();
        let mut clusters = Vec::new();
        for &s in &self.starts {
            let s = s as usize;
            if scratch.seen.contains(s) {
                continue;
            }
            let color = white(s);
            let begin = scratch.members.len();
            scratch.seen.insert(s);
            scratch.members.push(s as u32);
            let mut head = begin;
            let mut crossing = false;
            while head < scratch.members.len() {
                let v = scratch.members[head] as usize;
                head += 1;
                crossing |= self.t_out[v];
                for &m in &self.adjacency[v] {
                    if m >= HOLE {
                        continue;
                    }
                    let m = m as usize;
                    if scratch.seen.contains(m) {
                        continue;
                    }
                    let c = white(m);
                    if c == color {
                        scratch.seen.insert(m);
                        scratch.members.push(m as u32);
                    }
                }
            }
            if crossing {
                clusters.push(Cluster { white: color, range: (begin, scratch.members.len()) });
            } else {
                scratch.members.truncate(begin);
            }
        }
        let white_clusters = clusters.iter().filter(|c| c.white).count();
        let black_clusters = clusters.iter().filter(|c| !c.white).count();
        Crossings { clusters, white_clusters, black_clusters }
    }

    /// Largest number of vertex-disjoint arms inside one crossing cluster, up to `cap`.
    fn cluster_flow(&self, c: &Cluster, cap: usize, scratch: &mut ArmScratch) -> usize {
        let members = &scratch.members[c.range.0..c.range.1];
        let n = self.sites.len();
        let m = members.len();
        scratch.pos.resize(n, NONE);
        for (k, &v) in members.iter().enumerate() {
            scratch.pos[v as usize] = k as u32;
        }
        // nodes: in(k) = 2k, out(k) = 2k + 1, source 2m, sink 2m + 1
        let g = &mut scratch.graph;
        g.clear(2 * m + 2);
        let (source, sink) = (2 * m as u32, 2 * m as u32 + 1);
        for (k, &v) in members.iter().enumerate() {
            let (vin, vout) = (2 * k as u32, 2 * k as u32 + 1);
            g.add(vin, vout);
            if self.t_in[v as usize] {
                g.add(source, vin);
            }
            if self.t_out[v as usize] {
                g.add(vout, sink);
            }
            for &w in &self.adjacency[v as usize] {
                if w < HOLE && scratch.seen.contains(w as usize) {
                    let j = scratch.pos[w as usize];
                    if (j as usize) < m && members[j as usize] == w {
                        g.add(vout, 2 * j);
                    }
                }
            }
        }
        for &v in members {
            scratch.pos[v as usize] = NONE;
        }
        let mut flow = 0;
        while flow < cap && g.augment(source, sink) {
            flow += 1;
        }
        flow
    }

    /// Full evaluation of the arm counts needed for `pattern`.
    pub fn holds(&self, crossings: &Crossings, pattern: &ArmPattern, scratch: &mut ArmScratch) -> bool {
        let (w, b) = (crossings.white_clusters, crossings.black_clusters);
        match *pattern {
            ArmPattern::Alternating(k) => k % 2 == 0 && w >= k / 2 && b >= k / 2,
            ArmPattern::NotAllSame(k) => w >= 1 && b >= 1 && self.disjoint_arms(crossings, None, k, scratch) >= k,
            ArmPattern::Monochromatic(color, k) => {
                let have = if color.is_white() { w } else { b };
                have >= 1 && self.disjoint_arms(crossings, Some(color), k, scratch) >= k
            }
        }
    }

    /// Number of disjoint arms (of `color`, or of both colors), capped at `cap`.
    pub fn disjoint_arms(&self, crossings: &Crossings, color: Option<Color>, cap: usize, scratch: &mut ArmScratch) -> usize {
        let chosen: Vec<Cluster> = crossings
            .clusters
            .iter()
            .filter(|c| color.is_none_or(|col| col.is_white() == c.white))
            .copied()
            .collect();
        let mut total = chosen.len();
        if total >= cap {
            return cap;
        }
        for c in chosen {
            let extra_cap = cap - total;
            let f = self.cluster_flow(&c, 1 + extra_cap, scratch);
            total += f - 1;
            if total >= cap {
                return cap;
            }
        }
        total
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Cluster {
    pub white: bool,
    range: (usize, usize),
}

/// Crossing clusters of `∂₁A` sites with their member lists.
#[derive(Debug, Clone)]
pub struct Crossings {
    clusters: Vec<Cluster>,
    pub white_clusters: usize,
    pub black_clusters: usize,
}

/// Per-worker buffers for arm detection.
#[derive(Debug, Default)]
pub struct ArmScratch {
    seen: StampSet,
    members: Vec<u32>,
    pos: Vec<u32>,
    graph: UnitGraph,
    colors: LazyColors,
    done: StampSet,
    forbid: StampSet,
    escapes: Vec<(usize, usize, usize)>,
    chain: Vec<u32>,
    path: Vec<u32>,
}

/// Unit-capacity flow network stored as paired arcs (`e ^ 1` is the reverse of `e`).
#[derive(Debug, Default)]
struct UnitGraph {
    head: Vec<u32>,
    next: Vec<u32>,
    to: Vec<u32>,
    cap: Vec<u8>,
    parent: Vec<u32>,
    visit: StampSet,
    queue: Vec<u32>,
}

impl UnitGraph {
    fn clear(&mut self, nodes: usize) {
        self.head.clear();
        self.head.resize(nodes, NONE);
        self.next.clear();
        self.to.clear();
        self.cap.clear();
    }

    fn push_arc(&mut self, from: u32, to: u32, cap: u8) {
        self.next.push(self.head[from as usize]);
        self.head[from as usize] = self.to.len() as u32;
        self.to.push(to);
        self.cap.push(cap);
    }

    fn add(&mut self, from: u32, to: u32) {
        self.push_arc(from, to, 1);
        self.push_arc(to, from, 0);
    }

    /// One BFS augmenting path; returns whether the flow grew.
    fn augment(&mut self, source: u32, sink: u32) -> bool {
        let nodes = self.head.len();
        self.visit.reset(nodes);
        self.parent.resize(nodes, NONE);
        self.queue.clear();
        self.queue.push(source);
        self.visit.insert(source as usize);
        let mut qh = 0;
        while qh < self.queue.len() {
            let x = self.queue[qh];
            qh += 1;
            let mut e = self.head[x as usize];
            while e != NONE {
                let y = self.to[e as usize];
                if self.cap[e as usize] > 0 && self.visit.insert(y as usize) {
                    self.parent[y as usize] = e;
                    if y == sink {
                        let mut z = sink;
                        while z != source {
                            let pe = self.parent[z as usize];
                            self.cap[pe as usize] -= 1;
                            self.cap[(pe ^ 1) as usize] += 1;
                            z = self.to[(pe ^ 1) as usize];
                        }
                        return true;
                    }
                    self.queue.push(y);
                }
                e = self.next[e as usize];
            }
        }
        false
    }
}

/// Site colors drawn on demand, one generator chunk (2048 sites) at a time.
#[derive(Debug, Default)]
struct LazyColors {
    words: Vec<u32>,
    stamp: StampSet,
}

impl LazyColors {
    fn start(&mut self, chunks: usize) {
        if self.words.len() < chunks * 64 {
            self.words.resize(chunks * 64, 0);
        }
        self.stamp.reset(chunks);
    }

    #[inline]
    fn white(&mut self, rng: &mut ChaCha8Rng, index: u32) -> bool {
        let chunk = (index / 2048) as usize;
        if self.stamp.insert(chunk) {
            rng.set_word_pos((chunk * 64) as u128);
            for w in &mut self.words[chunk * 64..chunk * 64 + 64] {
                *w = rng.next_u32();
            }
        }
        (self.words[(index / 32) as usize] >> (index % 32)) & 1 == 1
    }
}

impl ArmGeometry {
    /// Color of local site `i` in the sample of `stream`.
    pub fn sample_color(&self, stream: RngStream, i: usize) -> bool {
        stream.site_bit(self.rng_index[i] as u64)
    }
}

fn build_ring(sites: &[SiteCoord], adjacency: &[[u32; 6]], t_in: &[bool], eta: f64) -> Option<Ring> {
    let start = (0..sites.len()).find(|&i| t_in[i] && adjacency[i].contains(&HOLE))?;
    let k0 = (0..6).find(|&k| adjacency[start][k] == HOLE)?;
    let (mut w, mut k) = (start, k0);
    let mut on_walk = StampSet::new(sites.len());
    let mut raw = Vec::new();
    // walk the inner region's outline with annulus sites on the left
    for _ in 0..6 * sites.len() + 6 {
        on_walk.insert(w);
        match adjacency[w][(k + 1) % 6] {
            EXTERIOR => return None,
            HOLE => k = (k + 1) % 6,
            x => {
                raw.push((w as u32, x, sites[w].step(k)));
                w = x as usize;
                k = (k + 5) % 6;
            }
        }
        if (w, k) == (start, k0) {
            break;
        }
    }
    if (w, k) != (start, k0) || (0..sites.len()).any(|i| t_in[i] && !on_walk.contains(i)) {
        return None;
    }
    let mut tri: Vec<(u32, u32)> = raw
        .iter()
        .map(|&(a, c, h)| {
            let ph = h.position(eta);
            let pa = sites[a as usize].position(eta) - ph;
            let pc = sites[c as usize].position(eta) - ph;
            if pa.cross(pc) > 0.0 { (a, c) } else { (c, a) }
        })
        .collect();
    let centroid = |&(p, q): &(u32, u32)| sites[p as usize].position(eta).lerp(sites[q as usize].position(eta), 0.5);
    let outline: Vec<Point> = tri.iter().map(centroid).collect();
    if crate::geometry::signed_area(&outline) < 0.0 {
        tri.reverse();
    }
    let index = tri.iter().enumerate().map(|(i, &pq)| (pq, i as u32)).collect();
    Some(Ring { tri, index })
}

enum TraceEnd {
    Escaped,
    Returned(usize),
}

impl ArmGeometry {
    /// Follows the interface leaving ring triangle `t` outward, with `left`
    /// sites on its left, until it reaches the outer boundary or the inner
    /// region. Sites on the left are appended to `chain`.
    fn trace(&self, ring: &Ring, t: usize, left: &mut impl FnMut(usize) -> bool, chain: &mut Vec<u32>) -> TraceEnd {
        let (p, q) = ring.tri[t];
        let mut w = q as usize;
        let mut k = (0..6).find(|&k| self.adjacency[w][k] == p).expect("ring triangle sites are adjacent");
        chain.push(q);
        for _ in 0..4 * self.sites.len() + 8 {
            match self.adjacency[w][(k + 1) % 6] {
                EXTERIOR => return TraceEnd::Escaped,
                HOLE => {
                    let b = self.adjacency[w][k];
                    return TraceEnd::Returned(ring.index[&(w as u32, b)] as usize);
                }
                x if left(x as usize) => {
                    w = x as usize;
                    k = (k + 5) % 6;
                    chain.push(x);
                }
                _ => k = (k + 1) % 6,
            }
        }
        unreachable!("interface did not terminate")
    }

    /// Interfaces from the inner region that reach the outer boundary, and
    /// the number of disjoint arms counted up to `cap` (only when at least two
    /// interfaces escape).
    fn ring_counts(&self, ring: &Ring, white: &mut impl FnMut(usize) -> bool, cap: usize, scratch: &mut ArmScratch) -> (usize, usize) {
        let m = ring.tri.len();
        scratch.done.reset(m);
        scratch.escapes.clear();
        scratch.chain.clear();
        for t in 0..m {
            if scratch.done.contains(t) {
                continue;
            }
            let (p, q) = ring.tri[t];
            let cq = white(q as usize);
            if white(p as usize) == cq {
                continue;
            }
            let begin = scratch.chain.len();
            match self.trace(ring, t, &mut |i| white(i) == cq, &mut scratch.chain) {
                TraceEnd::Escaped => scratch.escapes.push((t, begin, scratch.chain.len())),
                TraceEnd::Returned(t2) => {
                    scratch.done.insert(t2);
                    scratch.chain.truncate(begin);
                }
            }
        }
        let escapes = scratch.escapes.len();
        let mut total = escapes;
        if escapes < 2 {
            return (escapes, 0);
        }
        let ahead = |from: usize, to: usize| (to + m - from) % m;
        for j in 0..escapes {
            if total >= cap {
                break;
            }
            let (e, begin, end) = scratch.escapes[j];
            let stop = scratch.escapes[(j + 1) % escapes].0;
            let color = white(ring.tri[e].1 as usize);
            scratch.forbid.reset(self.sites.len());
            for &s in &scratch.chain[begin..end] {
                scratch.forbid.insert(s as usize);
            }
            // greedy: the next crossing hugging the ones already found, scanning counterclockwise
            let mut t = (e + 1) % m;
            while t != stop && total < cap {
                let (p, q) = ring.tri[t];
                let forbid = &scratch.forbid;
                let mut eff = |i: usize| !forbid.contains(i) && white(i) == color;
                if eff(q as usize) && !eff(p as usize) {
                    scratch.path.clear();
                    match self.trace(ring, t, &mut eff, &mut scratch.path) {
                        TraceEnd::Escaped => {
                            total += 1;
                            for &s in &scratch.path {
                                scratch.forbid.insert(s as usize);
                            }
                        }
                        TraceEnd::Returned(t2) => {
                            let d = ahead(t, t2);
                            if d > 0 && d < ahead(t, stop) {
                                t = t2;
                            }
                        }
                    }
                }
                t = (t + 1) % m;
            }
        }
        (escapes, total)
    }

    /// Evaluates `patterns` for the coloring `white(local index)`.
    pub fn evaluate(&self, white: &mut impl FnMut(usize) -> bool, patterns: &[ArmPattern], scratch: &mut ArmScratch, out: &mut Vec<bool>) {
        out.clear();
        let mono = patterns.iter().any(|p| matches!(p, ArmPattern::Monochromatic(..)));
        match &self.ring {
            Some(ring) if !mono => {
                let cap = patterns
                    .iter()
                    .filter_map(|p| match p {
                        ArmPattern::NotAllSame(k) => Some(*k),
                        _ => None,
                    })
                    .max()
                    .unwrap_or(0);
                let (escapes, total) = self.ring_counts(ring, white, cap, scratch);
                out.extend(patterns.iter().map(|p| match *p {
                    ArmPattern::Alternating(k) => k % 2 == 0 && escapes >= k,
                    ArmPattern::NotAllSame(k) => escapes >= 2 && total >= k,
                    ArmPattern::Monochromatic(..) => unreachable!(),
                }));
            }
            _ => self.evaluate_by_clusters(white, patterns, scratch, out),
        }
    }

    /// As [`evaluate`](Self::evaluate), always through cluster decomposition and flows.
    pub fn evaluate_by_clusters(&self, white: &mut impl FnMut(usize) -> bool, patterns: &[ArmPattern], scratch: &mut ArmScratch, out: &mut Vec<bool>) {
        out.clear();
        let crossings = self.explore(white, scratch);
        out.extend(patterns.iter().map(|p| self.holds(&crossings, p, scratch)));
    }

    /// Evaluates `patterns` on a fresh sample from `stream`; site colors are generated lazily.
    pub fn evaluate_sample(&self, stream: RngStream, patterns: &[ArmPattern], scratch: &mut ArmScratch, out: &mut Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(stream.master_seed);
        rng.set_stream(stream.stream_id);
        let mut colors = std::mem::take(&mut scratch.colors);
        colors.start(self.rng_chunks);
        let idx = &self.rng_index;
        self.evaluate(&mut |i| colors.white(&mut rng, idx[i]), patterns, scratch, out);
        scratch.colors = colors;
    }

    /// Whether the fast interface-based evaluation applies to this annulus.
    pub fn has_ring(&self) -> bool {
        self.ring.is_some()
    }
}

/// Arm event for a percolation sample; every annulus site must be an inner
/// site of the coloring's domain.
pub fn arm_event(coloring: &Coloring, annulus: &AnnulusSpec, pattern: &ArmPattern) -> Result<bool> {
    let domain = coloring.domain();
    let geom = ArmGeometry::new(annulus, domain.eta())?;
    arm_event_in(coloring, &geom, pattern, &mut ArmScratch::default())
}

pub fn arm_event_in(coloring: &Coloring, geom: &ArmGeometry, pattern: &ArmPattern, scratch: &mut ArmScratch) -> Result<bool> {
    let domain = coloring.domain();
    let index: Vec<u32> = geom
        .sites
        .iter()
        .map(|s| domain.inner_index(*s).ok_or(Error::AnnulusOutsideDomain))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    geom.evaluate(&mut |i| coloring.inner_white(index[i] as usize), std::slice::from_ref(pattern), scratch, &mut out);
    Ok(out[0])
}

/// Whether an annulus lies within the inner sites of a domain.
pub fn annulus_in_domain(domain: &LatticeDomain, geom: &ArmGeometry) -> bool {
    geom.sites.iter().all(|s| domain.is_inner(*s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEstimate {
    pub probability: f64,
    pub stderr: f64,
    pub hits: u64,
    pub trials: u64,
    pub geometry: AnnulusSpec,
    pub pattern: ArmPattern,
}

impl ArmEstimate {
    pub fn from_counts(hits: u64, trials: u64, geometry: AnnulusSpec, pattern: ArmPattern) -> Self {
        let p = hits as f64 / trials as f64;
        Self { probability: p, stderr: (p * (1.0 - p) / trials as f64).sqrt(), hits, trials, geometry, pattern }
    }
}

/// Hit counts for several patterns on the same samples, trials `first..first + n`.
pub fn count_hits(geom: &ArmGeometry, patterns: &[ArmPattern], master_seed: u64, trials: std::ops::Range<u64>) -> Vec<u64> {
    trials
        .into_par_iter()
        .map_init(
            || (ArmScratch::default(), Vec::new()),
            |(scratch, out), t| {
                geom.evaluate_sample(RngStream::new(master_seed, t), patterns, scratch, out);
                out.iter().map(|&b| b as u64).collect::<Vec<_>>()
            },
        )
        .reduce(
            || vec![0; patterns.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Monte Carlo estimate of the probability of `pattern` in `geometry` at mesh `eta`.
pub fn estimate_alpha(geometry: &AnnulusSpec, eta: f64, pattern: &ArmPattern, trials: u64, master_seed: u64) -> Result<ArmEstimate> {
    Ok(estimate_alpha_multi(geometry, eta, std::slice::from_ref(pattern), trials, master_seed)?.remove(0))
}

/// As [`estimate_alpha`] for several patterns evaluated on the same samples.
pub fn estimate_alpha_multi(
    geometry: &AnnulusSpec,
    eta: f64,
    patterns: &[ArmPattern],
    trials: u64,
    master_seed: u64,
) -> Result<Vec<ArmEstimate>> {
    if trials == 0 {
        return Err(Error::ConfigInvalid("trials must be at least 1".into()));
    }
    let geom = ArmGeometry::new(geometry, eta)?;
    let hits = count_hits(&geom, patterns, master_seed, 0..trials);
    Ok(patterns
        .iter()
        .zip(hits)
        .map(|(p, h)| ArmEstimate::from_counts(h, trials, geometry.clone(), p.clone()))
        .collect())
}
