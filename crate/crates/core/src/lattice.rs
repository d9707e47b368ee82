//! The triangular lattice `ηT`, its hexagonal dual, and the η-approximation
//! of a Jordan domain.
//!
//! Sites use axial integer coordinates `(u, v)` with embedding
//! `η·(u·e₁ + v·e₂)`, `e₁ = (1, 0)`, `e₂ = (1/2, √3/2)`. Each site is the
//! center of a hexagonal face of the dual lattice; a directed dual edge is
//! identified by the two sites it separates (one on its left, one on its
//! right).
//!
//! The approximation keeps the largest connected component (by site count)
//! of sites strictly inside the domain. Its boundary is the outer face walk
//! of the union of lattice triangles touching an inner site, traced
//! counterclockwise and rotated to start at the smallest boundary site.

use crate::error::{Error, Result};
use crate::geometry::{BoxSpec, Point, Polygon, Region};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, VecDeque};

pub const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// Unit steps to the six neighbors, in counterclockwise angular order
/// starting from direction 0°.
pub const DIRS: [SiteCoord; 6] = [
    SiteCoord::new(1, 0),
    SiteCoord::new(0, 1),
    SiteCoord::new(-1, 1),
    SiteCoord::new(-1, 0),
    SiteCoord::new(0, -1),
    SiteCoord::new(1, -1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteCoord {
    pub u: i32,
    pub v: i32,
}

impl SiteCoord {
    pub const fn new(u: i32, v: i32) -> Self {
        Self { u, v }
    }

    pub fn position(self, eta: f64) -> Point {
        Point::new(
            eta * (self.u as f64 + 0.5 * self.v as f64),
            eta * SQRT3_2 * self.v as f64,
        )
    }

    #[inline]
    pub fn step(self, dir: usize) -> SiteCoord {
        let d = DIRS[dir % 6];
        SiteCoord::new(self.u + d.u, self.v + d.v)
    }

    pub fn neighbors(self) -> [SiteCoord; 6] {
        std::array::from_fn(|k| self.step(k))
    }

    /// Direction index `k` with `other == self.step(k)`, if adjacent.
    #[inline]
    pub fn dir_to(self, other: SiteCoord) -> Option<usize> {
        const BY_OFFSET: [u8; 9] = [9, 3, 2, 4, 9, 1, 5, 0, 9];
        let (du, dv) = (other.u - self.u, other.v - self.v);
        if du.abs() > 1 || dv.abs() > 1 {
            return None;
        }
        let k = BY_OFFSET[((du + 1) * 3 + dv + 1) as usize];
        (k < 6).then_some(k as usize)
    }

    /// Nearest lattice site to a planar point.
    pub fn nearest(p: Point, eta: f64) -> SiteCoord {
        let v = p.y / (eta * SQRT3_2);
        let u = p.x / eta - 0.5 * v;
        let base = SiteCoord::new(u.floor() as i32, v.floor() as i32);
        let mut best = base;
        let mut best_d = f64::INFINITY;
        for du in -1..=2 {
            for dv in -1..=2 {
                let s = SiteCoord::new(base.u + du, base.v + dv);
                let d = s.position(eta).dist(p);
                if d < best_d {
                    best_d = d;
                    best = s;
                }
            }
        }
        best
    }
}

/// A directed edge of the hexagonal dual lattice, given by the hexagon on
/// its left and the hexagon on its right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DualEdge {
    pub left: SiteCoord,
    pub right: SiteCoord,
}

impl DualEdge {
    pub fn new(left: SiteCoord, right: SiteCoord) -> Result<Self> {
        left.dir_to(right)
            .map(|_| Self { left, right })
            .ok_or_else(|| Error::Trace(format!("{left:?} and {right:?} are not adjacent")))
    }

    pub fn reversed(self) -> DualEdge {
        DualEdge { left: self.right, right: self.left }
    }

    fn dir(self) -> usize {
        self.left.dir_to(self.right).expect("dual edge sites are adjacent")
    }

    /// Third site of the triangle the edge points into.
    pub fn head_site(self) -> SiteCoord {
        self.left.step(self.dir() + 1)
    }

    /// Third site of the triangle the edge comes from.
    pub fn tail_site(self) -> SiteCoord {
        self.left.step(self.dir() + 5)
    }

    pub fn tail(self, eta: f64) -> Point {
        let o = CORNER[(self.dir() + 5) % 6];
        self.left.position(eta) + Point::new(eta * o.0, eta * o.1)
    }

    pub fn head(self, eta: f64) -> Point {
        let o = CORNER[self.dir()];
        self.left.position(eta) + Point::new(eta * o.0, eta * o.1)
    }

    pub fn midpoint(self, eta: f64) -> Point {
        self.left.position(eta).lerp(self.right.position(eta), 0.5)
    }
}

/// Center of the triangle spanned by a site and its neighbors `k`, `k + 1`,
/// relative to the site, in units of `η`.
const CORNER: [(f64, f64); 6] = [
    (0.5, SQRT3_2 / 3.0),
    (0.0, 2.0 * SQRT3_2 / 3.0),
    (-0.5, SQRT3_2 / 3.0),
    (-0.5, -SQRT3_2 / 3.0),
    (0.0, -2.0 * SQRT3_2 / 3.0),
    (0.5, -SQRT3_2 / 3.0),
];

pub fn triangle_center(a: SiteCoord, b: SiteCoord, c: SiteCoord, eta: f64) -> Point {
    let (pa, pb, pc) = (a.position(eta), b.position(eta), c.position(eta));
    Point::new((pa.x + pb.x + pc.x) / 3.0, (pa.y + pb.y + pc.y) / 3.0)
}

/// A Jordan domain with up to four labelled boundary points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomainSpec", into = "RawDomainSpec")]
pub struct JordanDomainSpec {
    pub region: Region,
    pub marked: BTreeMap<String, Point>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawDomainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    named: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vertices: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    disk: Option<RawDisk>,
    #[serde(default)]
    marked: BTreeMap<String, Point>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawDisk {
    center: Point,
    radius: f64,
}

impl TryFrom<RawDomainSpec> for JordanDomainSpec {
    type Error = Error;

    fn try_from(raw: RawDomainSpec) -> Result<Self> {
        let mut spec = match (raw.named, raw.vertices, raw.disk) {
            (Some(name), None, None) => JordanDomainSpec::named(&name)?,
            (None, Some(vertices), None) => JordanDomainSpec {
                region: Region::Polygon(Polygon::new(vertices)),
                marked: BTreeMap::new(),
            },
            (None, None, Some(d)) => JordanDomainSpec {
                region: Region::Disk { center: d.center, radius: d.radius },
                marked: BTreeMap::new(),
            },
            _ => {
                return Err(Error::InvalidPolygon(
                    "exactly one of `named`, `vertices`, `disk` is required".into(),
                ))
            }
        };
        if !raw.marked.is_empty() {
            spec.marked = raw.marked;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl From<JordanDomainSpec> for RawDomainSpec {
    fn from(spec: JordanDomainSpec) -> Self {
        let (vertices, disk) = match spec.region {
            Region::Polygon(p) => (Some(p.vertices), None),
            Region::Disk { center, radius } => (None, Some(RawDisk { center, radius })),
        };
        RawDomainSpec { named: None, vertices, disk, marked: spec.marked }
    }
}

fn cardinal_marks(center: Point, r: f64) -> BTreeMap<String, Point> {
    [
        ("a", Point::new(center.x, center.y - r)),
        ("b", Point::new(center.x + r, center.y)),
        ("c", Point::new(center.x, center.y + r)),
        ("d", Point::new(center.x - r, center.y)),
    ]
    .into_iter()
    .map(|(k, p)| (k.to_string(), p))
    .collect()
}

impl JordanDomainSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawDomainSpec = serde_json::from_str(text)?;
        raw.try_into()
    }

    /// Built-in domains. `disk` and `square` carry marks `a = -i`, `b = 1`,
    /// `c = i`, `d = -1`; `rhombus60` is marked at its corners.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "disk" => Ok(Self::disk(Point::new(0.0, 0.0), 1.0)),
            "square" => Ok(Self::square(BoxSpec::new(Point::new(0.0, 0.0), 1.0))),
            "rhombus60" => {
                let v = vec![
                    Point::new(0.0, 0.0),
                    Point::new(1.0, 0.0),
                    Point::new(1.5, SQRT3_2),
                    Point::new(0.5, SQRT3_2),
                ];
                let marked = ["a", "b", "c", "d"]
                    .iter()
                    .zip(&v)
                    .map(|(k, p)| (k.to_string(), *p))
                    .collect();
                Ok(Self { region: Region::Polygon(Polygon::new(v)), marked })
            }
            other => Err(Error::InvalidPolygon(format!("unknown named domain `{other}`"))),
        }
    }

    pub fn disk(center: Point, radius: f64) -> Self {
        Self { region: Region::Disk { center, radius }, marked: cardinal_marks(center, radius) }
    }

    pub fn square(b: BoxSpec) -> Self {
        Self { region: Region::Polygon(b.polygon()), marked: cardinal_marks(b.center, b.radius) }
    }

    pub fn with_marks(mut self, marks: &[(&str, Point)]) -> Self {
        self.marked = marks.iter().map(|(k, p)| (k.to_string(), *p)).collect();
        self
    }

    /// Position of a boundary point along the boundary, as a fraction of one turn
    /// counterclockwise.
    fn boundary_parameter(&self, p: Point) -> Option<f64> {
        match &self.region {
            Region::Disk { center, radius } => {
                let tol = 1e-9 * radius.max(1.0);
                if (p.dist(*center) - radius).abs() > tol {
                    return None;
                }
                let a = (p.y - center.y).atan2(p.x - center.x);
                Some(a.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU)
            }
            Region::Polygon(poly) => {
                let scale = poly.bbox().width().max(poly.bbox().height());
                let (i, t) = poly.locate_on_boundary(p, 1e-9 * scale)?;
                let lengths: Vec<f64> = poly.edges().map(|(a, b)| a.dist(b)).collect();
                let total: f64 = lengths.iter().sum();
                let before: f64 = lengths[..i].iter().sum();
                Some((before + t * lengths[i]) / total)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.region {
            Region::Polygon(p) => {
                if !p.is_simple() {
                    return Err(Error::InvalidPolygon("polygon is not simple".into()));
                }
            }
            Region::Disk { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidPolygon("disk radius must be positive".into()));
                }
            }
        }
        if self.marked.len() > 4 {
            return Err(Error::InvalidPolygon("at most four marked points".into()));
        }
        let mut params = Vec::new();
        for (label, p) in &self.marked {
            let t = self.boundary_parameter(*p).ok_or_else(|| {
                Error::InvalidPolygon(format!("marked point `{label}` is not on the boundary"))
            })?;
            params.push(t);
        }
        // labels in alphabetical order must be counterclockwise: at most one descent
        let descents = (0..params.len())
            .filter(|&i| params[i] >= params[(i + 1) % params.len()])
            .count();
        if params.len() >= 3 && descents != 1 {
            return Err(Error::InvalidPolygon(
                "marked points are not in counterclockwise label order".into(),
            ));
        }
        Ok(())
    }
}

/// Classification of a lattice site relative to a [`LatticeDomain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Outside,
    /// Inner site with its dense index.
    Inner(u32),
    /// Boundary site with its position on the counterclockwise boundary cycle.
    Boundary(u32),
}

const OUTSIDE: u32 = u32::MAX;
const BOUNDARY_FLAG: u32 = 1 << 31;

/// Dense parallelogram of axial cells covering the domain.
#[derive(Debug, Clone)]
struct AxialGrid {
    umin: i32,
    vmin: i32,
    width: i32,
    height: i32,
    cells: Vec<u32>,
}

impl AxialGrid {
    #[inline]
    fn index(&self, s: SiteCoord) -> Option<usize> {
        let du = s.u - self.umin;
        let dv = s.v - self.vmin;
        if du < 0 || dv < 0 || du >= self.width || dv >= self.height {
            None
        } else {
            Some(dv as usize * self.width as usize + du as usize)
        }
    }

    #[inline]
    fn site(&self, idx: usize) -> SiteCoord {
        let w = self.width as usize;
        SiteCoord::new(self.umin + (idx % w) as i32, self.vmin + (idx / w) as i32)
    }
}

/// The η-approximation `Ω_η` of a Jordan domain.
#[derive(Debug, Clone)]
pub struct LatticeDomain {
    eta: f64,
    spec: JordanDomainSpec,
    grid: AxialGrid,
    inner_sites: Vec<SiteCoord>,
    boundary_sites: Vec<SiteCoord>,
    marked_edges: BTreeMap<String, usize>,
}

impl LatticeDomain {
    /// Builds the approximation of `spec` at mesh `eta`.
    pub fn build(spec: &JordanDomainSpec, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidPolygon(format!("mesh must be positive, got {eta}")));
        }
        spec.validate()?;
        let bbox = spec.region.bbox();
        let row = eta * SQRT3_2;
        let vmin = (bbox.min.y / row).floor() as i32 - 3;
        let vmax = (bbox.max.y / row).ceil() as i32 + 3;
        let umin = (bbox.min.x / eta - 0.5 * vmax as f64).floor() as i32 - 3;
        let umax = (bbox.max.x / eta - 0.5 * vmin as f64).ceil() as i32 + 3;
        let width = umax - umin + 1;
        let height = vmax - vmin + 1;
        let mut grid = AxialGrid {
            umin,
            vmin,
            width,
            height,
            cells: vec![OUTSIDE; width as usize * height as usize],
        };

        let tol = 1e-9 * eta;
        let mut inside = vec![false; grid.cells.len()];
        for (idx, flag) in inside.iter_mut().enumerate() {
            let du = (idx % width as usize) as i32;
            let dv = (idx / width as usize) as i32;
            // keep a two-cell margin so every neighbor lookup stays in the grid
            if du < 2 || dv < 2 || du >= width - 2 || dv >= height - 2 {
                continue;
            }
            let p = grid.site(idx).position(eta);
            *flag = spec.region.contains_strict(p) && spec.region.distance_to_boundary(p) > tol;
        }

        let mut inner = largest_component(&grid, &inside).ok_or(Error::DomainTooSmall)?;
        let boundary = loop {
            match outer_boundary(&grid, &inner)? {
                BoundaryWalk::Simple(cycle) => break cycle,
                BoundaryWalk::Pinched(z) => {
                    // drop the inner sites touching the pinch vertex and retake the
                    // largest component
                    for n in z.neighbors() {
                        if let Some(i) = grid.index(n) {
                            inner[i] = false;
                        }
                    }
                    inner = largest_component(&grid, &inner).ok_or(Error::DomainTooSmall)?;
                }
            }
        };

        let mut inner_sites: Vec<SiteCoord> = inner
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| grid.site(i))
            .collect();
        inner_sites.sort_by_key(|s| (s.v, s.u));
        for (k, s) in inner_sites.iter().enumerate() {
            let idx = grid.index(*s).expect("inner site in grid");
            grid.cells[idx] = k as u32;
        }
        for (k, s) in boundary.iter().enumerate() {
            let idx = grid.index(*s).expect("boundary site in grid");
            grid.cells[idx] = BOUNDARY_FLAG | k as u32;
        }

        let mut domain = LatticeDomain {
            eta,
            spec: spec.clone(),
            grid,
            inner_sites,
            boundary_sites: boundary,
            marked_edges: BTreeMap::new(),
        };
        let marks: Vec<(String, Point)> =
            spec.marked.iter().map(|(k, p)| (k.clone(), *p)).collect();
        for (label, p) in marks {
            let e = domain.nearest_boundary_edge(p);
            domain.marked_edges.insert(label, e);
        }
        Ok(domain)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn spec(&self) -> &JordanDomainSpec {
        &self.spec
    }

    pub fn region(&self) -> &Region {
        &self.spec.region
    }

    /// Inner sites in dense-index order (row-major by `(v, u)`).
    pub fn inner_sites(&self) -> &[SiteCoord] {
        &self.inner_sites
    }

    /// Boundary sites in counterclockwise cyclic order.
    pub fn boundary_sites(&self) -> &[SiteCoord] {
        &self.boundary_sites
    }

    pub fn num_inner(&self) -> usize {
        self.inner_sites.len()
    }

    pub fn num_boundary(&self) -> usize {
        self.boundary_sites.len()
    }

    pub fn marked_edges(&self) -> &BTreeMap<String, usize> {
        &self.marked_edges
    }

    #[inline]
    pub fn cell(&self, s: SiteCoord) -> Cell {
        match self.grid.index(s) {
            None => Cell::Outside,
            Some(i) => match self.grid.cells[i] {
                OUTSIDE => Cell::Outside,
                c if c & BOUNDARY_FLAG != 0 => Cell::Boundary(c & !BOUNDARY_FLAG),
                c => Cell::Inner(c),
            },
        }
    }

    #[inline]
    pub fn inner_index(&self, s: SiteCoord) -> Option<u32> {
        match self.cell(s) {
            Cell::Inner(i) => Some(i),
            _ => None,
        }
    }

    pub fn is_inner(&self, s: SiteCoord) -> bool {
        matches!(self.cell(s), Cell::Inner(_))
    }

    /// Boundary edge `i` joins boundary sites `i` and `i + 1` (cyclically).
    pub fn boundary_edge(&self, i: usize) -> (SiteCoord, SiteCoord) {
        let m = self.boundary_sites.len();
        (self.boundary_sites[i % m], self.boundary_sites[(i + 1) % m])
    }

    /// Resolves a marked-point label to its boundary edge index.
    pub fn marked(&self, label: &str) -> Result<usize> {
        self.marked_edges
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Boundary edge whose midpoint is nearest to `x`; ties (up to rounding)
    /// go to the smaller index.
    pub fn nearest_boundary_edge(&self, x: Point) -> usize {
        let tol = 1e-9 * self.eta;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..self.boundary_sites.len() {
            let (p, q) = self.boundary_edge(i);
            let mid = p.position(self.eta).lerp(q.position(self.eta), 0.5);
            let d = mid.dist(x);
            if d < best_d - tol {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Whether boundary position `pos` lies on the arc `Δ_{e,e2}` (the
    /// counterclockwise path after edge `e` up to edge `e2`).
    #[inline]
    pub fn arc_contains(&self, e: usize, e2: usize, pos: usize) -> bool {
        let m = self.boundary_sites.len();
        let len = (e2 + m - e) % m;
        let off = (pos + m - e - 1) % m;
        off < len
    }

    /// Sites of `Δ_{e,e2}` in counterclockwise order.
    pub fn boundary_arc(&self, e: usize, e2: usize) -> Result<Vec<SiteCoord>> {
        let m = self.boundary_sites.len();
        if e >= m || e2 >= m {
            return Err(Error::NotBoundaryEdge(format!("index out of range ({e}, {e2}) of {m}")));
        }
        if e == e2 {
            return Err(Error::NotBoundaryEdge("arc endpoints must be distinct edges".into()));
        }
        let len = (e2 + m - e) % m;
        Ok((1..=len).map(|k| self.boundary_sites[(e + k) % m]).collect())
    }

    /// Stable 64-bit FNV-1a digest of the mesh and site sets.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(self.eta.to_bits());
        feed(self.inner_sites.len() as u64);
        for s in self.inner_sites.iter().chain(&self.boundary_sites) {
            feed(((s.u as u32 as u64) << 32) | s.v as u32 as u64);
        }
        h
    }
}

fn largest_component(grid: &AxialGrid, mask: &[bool]) -> Option<Vec<bool>> {
    let mut label = vec![u32::MAX; mask.len()];
    let mut best: Option<(usize, SiteCoord, u32)> = None;
    let mut queue = VecDeque::new();
    let mut next = 0u32;
    for start in 0..mask.len() {
        if !mask[start] || label[start] != u32::MAX {
            continue;
        }
        label[start] = next;
        queue.push_back(start);
        let mut count = 0usize;
        let mut min_site = grid.site(start);
        while let Some(i) = queue.pop_front() {
            count += 1;
            let s = grid.site(i);
            min_site = min_site.min(s);
            for n in s.neighbors() {
                if let Some(j) = grid.index(n) {
                    if mask[j] && label[j] == u32::MAX {
                        label[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        let better = match best {
            None => true,
            Some((c, m, _)) => count > c || (count == c && min_site < m),
        };
        if better {
            best = Some((count, min_site, next));
        }
        next += 1;
    }
    let (_, _, keep) = best?;
    Some(label.iter().map(|&l| l == keep).collect())
}

enum BoundaryWalk {
    Simple(Vec<SiteCoord>),
    Pinched(SiteCoord),
}

/// Directed boundary edges `p → q` of the triangles touching `inner`, with
/// those triangles on the left.
fn outer_boundary(grid: &AxialGrid, inner: &[bool]) -> Result<BoundaryWalk> {
    let is_inner = |s: SiteCoord| grid.index(s).is_some_and(|i| inner[i]);
    let mut out: HashMap<SiteCoord, Vec<SiteCoord>> = HashMap::new();
    let mut neighbors_of_inner = std::collections::HashSet::new();
    for (idx, _) in inner.iter().enumerate().filter(|(_, &b)| b) {
        let x = grid.site(idx);
        for k in 0..6 {
            let p = x.step(k);
            if !is_inner(p) {
                neighbors_of_inner.insert(p);
            }
            let q = x.step(k + 1);
            let y = p.step(k + 1);
            if !is_inner(p) && !is_inner(q) && !is_inner(y) {
                out.entry(p).or_default().push(q);
            }
        }
    }
    if let Some((&z, _)) = out
        .iter()
        .filter(|(_, v)| v.len() > 1)
        .min_by_key(|(s, _)| **s)
    {
        return Ok(BoundaryWalk::Pinched(z));
    }
    let start = *out.keys().min().ok_or(Error::DomainTooSmall)?;
    let mut cycle = vec![start];
    let mut cur = out[&start][0];
    while cur != start {
        cycle.push(cur);
        if cycle.len() > out.len() {
            return Err(Error::InvalidPolygon("boundary walk did not close".into()));
        }
        cur = out[&cur][0];
    }
    if cycle.len() != out.len() || cycle.len() != neighbors_of_inner.len() {
        return Err(Error::InvalidPolygon(
            "approximation encloses sites outside the domain".into(),
        ));
    }
    Ok(BoundaryWalk::Simple(cycle))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_domain(eta: f64) -> LatticeDomain {
        LatticeDomain::build(&JordanDomainSpec::named("disk").unwrap(), eta).unwrap()
    }

    #[test]
    fn neighbor_directions_are_ccw_and_unit_length() {
        let o = SiteCoord::new(0, 0);
        let mut last = -1.0;
        for (k, n) in o.neighbors().iter().enumerate() {
            let p = n.position(1.0);
            assert!((p.norm() - 1.0).abs() < 1e-12);
            let a = p.y.atan2(p.x).rem_euclid(std::f64::consts::TAU);
            assert!(a > last, "direction {k} out of order");
            last = a;
        }
    }

    #[test]
    fn dual_edge_has_expected_length() {
        let e = DualEdge::new(SiteCoord::new(0, 0), SiteCoord::new(1, 0)).unwrap();
        let len = e.tail(1.0).dist(e.head(1.0));
        assert!((len - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        // head is on the left side's counterclockwise turn: above the edge
        assert!(e.head(1.0).y > 0.0);
    }

    #[test]
    fn unit_square_at_coarse_mesh_is_too_small() {
        let spec = JordanDomainSpec::square(BoxSpec::new(Point::new(0.5, 0.5), 0.5));
        assert!(matches!(LatticeDomain::build(&spec, 2.0), Err(Error::DomainTooSmall)));
    }

    #[test]
    fn disk_inner_count_matches_enumeration() {
        let eta = 0.3;
        let d = disk_domain(eta);
        // direct enumeration of sites with |position| < 1, then the component of the origin
        let mut inside = std::collections::HashSet::new();
        for u in -10..=10 {
            for v in -10..=10 {
                let s = SiteCoord::new(u, v);
                if s.position(eta).norm() < 1.0 {
                    inside.insert(s);
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![SiteCoord::new(0, 0)];
        seen.insert(SiteCoord::new(0, 0));
        while let Some(s) = stack.pop() {
            for n in s.neighbors() {
                if inside.contains(&n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        assert_eq!(d.num_inner(), seen.len());
        assert_eq!(d.num_inner(), 37);
    }

    #[test]
    fn build_is_deterministic() {
        let a = disk_domain(0.07);
        let b = disk_domain(0.07);
        assert_eq!(a.inner_sites(), b.inner_sites());
        assert_eq!(a.boundary_sites(), b.boundary_sites());
        assert_eq!(a.marked_edges(), b.marked_edges());
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn structural_invariants() {
        for eta in [0.3, 0.11, 0.05] {
            for name in ["disk", "square", "rhombus60"] {
                let d = LatticeDomain::build(&JordanDomainSpec::named(name).unwrap(), eta).unwrap();
                // every neighbor of an inner site is inner or boundary
                for s in d.inner_sites() {
                    assert!(d.region().contains_strict(s.position(eta)));
                    for n in s.neighbors() {
                        assert_ne!(d.cell(n), Cell::Outside, "{name} {eta}");
                    }
                }
                // boundary cycle is simple and consecutive sites are adjacent
                let b = d.boundary_sites();
                let set: std::collections::HashSet<_> = b.iter().collect();
                assert_eq!(set.len(), b.len());
                for i in 0..b.len() {
                    assert!(b[i].dir_to(b[(i + 1) % b.len()]).is_some());
                }
                // counterclockwise orientation
                let pts: Vec<Point> = b.iter().map(|s| s.position(eta)).collect();
                assert!(crate::geometry::signed_area(&pts) > 0.0);
                // connectivity of inner sites
                let mut seen = std::collections::HashSet::new();
                let mut stack = vec![d.inner_sites()[0]];
                seen.insert(d.inner_sites()[0]);
                while let Some(s) = stack.pop() {
                    for n in s.neighbors() {
                        if d.is_inner(n) && seen.insert(n) {
                            stack.push(n);
                        }
                    }
                }
                assert_eq!(seen.len(), d.num_inner());
            }
        }
    }

    #[test]
    fn halving_mesh_keeps_coverage() {
        let coarse = disk_domain(0.1);
        let fine = disk_domain(0.05);
        let fine_pts: Vec<Point> = fine.inner_sites().iter().map(|s| s.position(0.05)).collect();
        for s in coarse.inner_sites() {
            let p = s.position(0.1);
            assert!(fine_pts.iter().any(|q| q.dist(p) <= 0.1 + 1e-12));
        }
    }

    #[test]
    fn arcs_partition_the_boundary() {
        let d = disk_domain(0.1);
        let a = d.marked("a").unwrap();
        let c = d.marked("c").unwrap();
        let mut all = d.boundary_arc(a, c).unwrap();
        all.extend(d.boundary_arc(c, a).unwrap());
        all.sort();
        let mut expect = d.boundary_sites().to_vec();
        expect.sort();
        assert_eq!(all, expect);
        assert!(matches!(d.boundary_arc(a, a), Err(Error::NotBoundaryEdge(_))));
    }

    #[test]
    fn square_arc_lengths_match_hand_count() {
        // Square [0,3]x[0,3] at mesh 0.5: rows v = 1..6 hold 6,5,6,5,6,5 sites.
        let spec = JordanDomainSpec::square(BoxSpec::new(Point::new(1.5, 1.5), 1.5))
            .with_marks(&[("a", Point::new(0.0, 0.0)), ("b", Point::new(3.0, 3.0))]);
        let d = LatticeDomain::build(&spec, 0.5).unwrap();
        assert_eq!(d.num_inner(), 33);
        let outer: std::collections::BTreeSet<SiteCoord> = d
            .inner_sites()
            .iter()
            .flat_map(|s| s.neighbors())
            .filter(|n| !d.is_inner(*n))
            .collect();
        assert_eq!(d.num_boundary(), outer.len());
        let a = d.marked("a").unwrap();
        let b = d.marked("b").unwrap();
        let ab = d.boundary_arc(a, b).unwrap();
        let ba = d.boundary_arc(b, a).unwrap();
        assert_eq!(ab.len() + ba.len(), d.num_boundary());
        assert!(ab.iter().all(|s| s.position(0.5).x > s.position(0.5).y - 0.5));
    }

    #[test]
    fn nearest_edge_contract() {
        let d = disk_domain(0.1);
        for i in [0, 5, d.num_boundary() - 1] {
            let (p, q) = d.boundary_edge(i);
            let mid = p.position(0.1).lerp(q.position(0.1), 0.5);
            assert_eq!(d.nearest_boundary_edge(mid), i);
        }
        // equidistant from edges 0 and 1: the shared site is equidistant from both midpoints
        let shared = d.boundary_sites()[1].position(0.1);
        let (p0, q0) = d.boundary_edge(0);
        let (p1, q1) = d.boundary_edge(1);
        let m0 = p0.position(0.1).lerp(q0.position(0.1), 0.5);
        let m1 = p1.position(0.1).lerp(q1.position(0.1), 0.5);
        let d0 = m0.dist(shared);
        let d1 = m1.dist(shared);
        assert!((d0 - d1).abs() < 1e-12);
        assert_eq!(d.nearest_boundary_edge(shared), 0);
    }

    #[test]
    fn rejects_self_intersecting_polygon() {
        let text = r#"{"vertices": [[0,0],[1,1],[1,0],[0,1]]}"#;
        assert!(matches!(JordanDomainSpec::from_json(text), Err(Error::InvalidPolygon(_))));
    }

    #[test]
    fn json_spec_round_trip() {
        let text = r#"{"vertices": [[-1,-1],[1,-1],[1,1],[-1,1]], "marked": {"a": [0,-1], "b": [0,1]}}"#;
        let spec = JordanDomainSpec::from_json(text).unwrap();
        assert_eq!(spec.marked.len(), 2);
        let back: JordanDomainSpec =
            serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        let named = JordanDomainSpec::from_json(r#"{"named": "rhombus60"}"#).unwrap();
        assert_eq!(named.marked.len(), 4);
    }
}
