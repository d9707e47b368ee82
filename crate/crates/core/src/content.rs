//! Minkowski content, box counts, the conditional content `β_ε`, and the
//! normalized atomic measures `τ_η` and `μ_η`.

use crate::connectivity::PivotalSet;
use crate::error::{Error, Result};
use crate::geometry::{BoxSpec, Point, Polygon, Rect, Region};
use crate::interface::{trace_interface, DiscreteCurve};
use crate::lattice::{JordanDomainSpec, LatticeDomain};
use crate::percolation::{Coloring, RngStream};
use crate::util::pairwise_sum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Pixels per `r` used when rasterizing an `r`-neighborhood.
pub const PIXELS_PER_RADIUS: f64 = 16.0;

/// A planar set whose neighborhoods can be measured.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Segments(Vec<(Point, Point)>),
    Points(Vec<Point>),
    FilledPolygon(Polygon),
}

impl Shape {
    pub fn from_curve(curve: &DiscreteCurve) -> Self {
        Shape::Segments(curve.segments().collect())
    }

    /// The curve's segments clipped to `rect`.
    pub fn clipped(curve: &DiscreteCurve, rect: &Rect) -> Self {
        let v = curve.vertices();
        Shape::Segments(v.windows(2).filter_map(|w| rect.clip_segment(w[0], w[1])).collect())
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Shape::Segments(s) => s.is_empty(),
            Shape::Points(p) => p.is_empty(),
            Shape::FilledPolygon(p) => p.vertices.is_empty(),
        }
    }

    fn pieces(&self) -> Vec<(Point, Point)> {
        match self {
            Shape::Segments(s) => s.clone(),
            Shape::Points(p) => p.iter().map(|&q| (q, q)).collect(),
            Shape::FilledPolygon(p) => p.edges().collect(),
        }
    }

    pub fn bbox(&self) -> Option<Rect> {
        Rect::bounding(self.pieces().into_iter().flat_map(|(a, b)| [a, b]))
    }

    pub fn diameter(&self) -> f64 {
        self.bbox().map_or(0.0, |r| r.min.dist(r.max))
    }
}

/// `{x : lo ≤ c0 + c1·x ≤ hi}`.
fn linear_band(c0: f64, c1: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if c1 == 0.0 {
        return (lo <= c0 && c0 <= hi).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let (x0, x1) = ((lo - c0) / c1, (hi - c0) / c1);
    Some((x0.min(x1), x0.max(x1)))
}

/// The interval where the horizontal line at height `y` meets the closed
/// `r`-neighborhood of segment `ab`.
fn capsule_row(a: Point, b: Point, r: f64, y: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in [a, b] {
        let dy = y - c.y;
        if dy.abs() <= r {
            let h = (r * r - dy * dy).sqrt();
            lo = lo.min(c.x - h);
            hi = hi.max(c.x + h);
        }
    }
    let d = b - a;
    let len2 = d.dot(d);
    if len2 > 0.0 {
        // projection onto the segment within [0, len²] and perpendicular offset within r·len
        let along = linear_band(-a.x * d.x + (y - a.y) * d.y, d.x, 0.0, len2);
        let len = len2.sqrt();
        let across = linear_band(-a.x * d.y - (y - a.y) * d.x, d.y, -r * len, r * len);
        if let (Some((p0, p1)), Some((q0, q1))) = (along, across) {
            let (s0, s1) = (p0.max(q0), p1.min(q1));
            if s0 <= s1 {
                lo = lo.min(s0);
                hi = hi.max(s1);
            }
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Area of the closed `r`-neighborhood of `shape`: exact union lengths along
/// scanlines at the midpoints of rows of height at most `r/16`, spanning the
/// neighborhood's vertical extent.
pub fn neighborhood_area(shape: &Shape, r: f64) -> Result<f64> {
    let bb = shape.bbox().ok_or(Error::EmptyShape)?;
    let (y0, height) = (bb.min.y - r, bb.height() + 2.0 * r);
    let rows = (height / r * PIXELS_PER_RADIUS).ceil().max(1.0);
    let pitch = height / rows;
    let rows = rows as i64;
    let row_y = |i: i64| y0 + (i as f64 + 0.5) * pitch;
    let rows_for = |ylo: f64, yhi: f64| {
        let i0 = (((ylo - y0) / pitch - 0.5).ceil() as i64).max(0);
        let i1 = (((yhi - y0) / pitch - 0.5).floor() as i64).min(rows - 1);
        i0..=i1
    };
    // Per-row spans; consecutive curve segments overlap, so most new spans
    // merge into the row's latest one.
    let mut spans: Vec<Vec<(f64, f64)>> = vec![Vec::new(); rows as usize];
    let mut push = |i: i64, lo: f64, hi: f64| {
        let row = &mut spans[i as usize];
        match row.last_mut() {
            Some(last) if lo <= last.1 && hi >= last.0 => *last = (last.0.min(lo), last.1.max(hi)),
            _ => row.push((lo, hi)),
        }
    };
    for (a, b) in shape.pieces() {
        for i in rows_for(a.y.min(b.y) - r, a.y.max(b.y) + r) {
            if let Some((lo, hi)) = capsule_row(a, b, r, row_y(i)) {
                push(i, lo, hi);
            }
        }
    }
    if let Shape::FilledPolygon(poly) = shape {
        let mut xs = Vec::new();
        for i in rows_for(bb.min.y, bb.max.y) {
            let y = row_y(i);
            xs.clear();
            for (a, b) in poly.edges() {
                if (a.y <= y) != (b.y <= y) {
                    xs.push(a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x));
                }
            }
            xs.sort_by(f64::total_cmp);
            for p in xs.chunks_exact(2) {
                push(i, p[0], p[1]);
            }
        }
    }
    let mut lengths = Vec::new();
    for row in &mut spans {
        row.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
        let mut current: Option<(f64, f64)> = None;
        for &(lo, hi) in row.iter() {
            match &mut current {
                Some((_, c1)) if lo <= *c1 => *c1 = c1.max(hi),
                _ => {
                    if let Some((c0, c1)) = current {
                        lengths.push(c1 - c0);
                    }
                    current = Some((lo, hi));
                }
            }
        }
        if let Some((c0, c1)) = current {
            lengths.push(c1 - c0);
        }
    }
    Ok(pairwise_sum(&lengths) * pitch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentSample {
    pub r: f64,
    pub area: f64,
    /// `r^{d−2}·area`.
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentProfile {
    pub d: f64,
    pub samples: Vec<ContentSample>,
    pub plateau_estimate: f64,
    pub window: (f64, f64),
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// `d`-dimensional Minkowski content profile over `r_grid`; the plateau is
/// the median of `m_r` over `window` (the whole grid when the window holds
/// no grid point).
pub fn minkowski_estimate(shape: &Shape, d: f64, r_grid: &[f64], window: Option<(f64, f64)>) -> Result<ContentProfile> {
    if shape.is_empty() {
        return Err(Error::EmptyShape);
    }
    if r_grid.is_empty() || r_grid.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::ConfigInvalid("r grid must be nonempty and positive".into()));
    }
    let mut rs = r_grid.to_vec();
    rs.sort_by(f64::total_cmp);
    let samples = rs
        .iter()
        .map(|&r| {
            let area = neighborhood_area(shape, r)?;
            Ok(ContentSample { r, area, m: r.powf(d - 2.0) * area })
        })
        .collect::<Result<Vec<_>>>()?;
    let window = window.unwrap_or((rs[0], rs[rs.len() - 1]));
    let inside: Vec<f64> = samples.iter().filter(|s| s.r >= window.0 && s.r <= window.1).map(|s| s.m).collect();
    let plateau_estimate = if inside.is_empty() { median(samples.iter().map(|s| s.m).collect()) } else { median(inside) };
    Ok(ContentProfile { d, samples, plateau_estimate, window })
}

/// Geometric grid `lo, lo·√2, …` up to `hi`.
pub fn geometric_grid(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = lo;
    while r <= hi * (1.0 + 1e-12) {
        out.push(r);
        r *= std::f64::consts::SQRT_2;
    }
    out
}

/// 7/4-content of a curve piece with the default window `[4η, diameter/8]`.
pub fn curve_content(shape: &Shape, eta: f64) -> Result<f64> {
    let lo = 4.0 * eta;
    let hi = (shape.diameter() / 8.0).max(lo);
    Ok(minkowski_estimate(shape, 1.75, &geometric_grid(lo, hi), Some((lo, hi)))?.plateau_estimate)
}

fn is_power_of_two(x: f64) -> bool {
    x > 0.0 && x.is_finite() && x == 2f64.powi(x.log2().round() as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCountResult {
    pub epsilon: f64,
    /// `Y^ε`.
    pub count: usize,
    /// Row-major indices of the hit boxes.
    pub boxes_hit: Vec<usize>,
    /// Number of `ε`-boxes tiling the region.
    pub total: usize,
}

/// The `ε`-boxes tiling `region`: centers at `min + (2i+1)ε`, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxGrid {
    pub min: Point,
    pub epsilon: f64,
    pub cols: usize,
    pub rows: usize,
}

impl BoxGrid {
    pub fn new(region: &Rect, epsilon: f64) -> Result<Self> {
        if !is_power_of_two(epsilon) {
            return Err(Error::NotDyadic(format!("epsilon {epsilon}")));
        }
        let cols = region.width() / (2.0 * epsilon);
        let rows = region.height() / (2.0 * epsilon);
        if cols.fract() != 0.0 || rows.fract() != 0.0 || cols < 1.0 || rows < 1.0 {
            return Err(Error::NotDyadic(format!("region is not tiled by boxes of radius {epsilon}")));
        }
        Ok(Self { min: region.min, epsilon, cols: cols as usize, rows: rows as usize })
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, i: usize) -> Point {
        let (row, col) = (i / self.cols, i % self.cols);
        let e = self.epsilon;
        Point::new(self.min.x + (2 * col + 1) as f64 * e, self.min.y + (2 * row + 1) as f64 * e)
    }

    /// `Q_i` scaled by `factor` about its center.
    pub fn cell(&self, i: usize, factor: f64) -> Rect {
        BoxSpec::new(self.center(i), factor * self.epsilon).rect()
    }
}

/// `Y^ε`: the number of `ε`-boxes of `region` whose doubled box meets the curve.
pub fn box_count(curve: &DiscreteCurve, domain: &Region, region: &BoxSpec, epsilon: f64) -> Result<BoxCountResult> {
    let v = curve.vertices();
    box_count_segments(v.windows(2).map(|w| (w[0], w[1])), domain, region, epsilon)
}

/// [`box_count`] for an arbitrary set of segments.
pub fn box_count_segments(
    segments: impl IntoIterator<Item = (Point, Point)>,
    domain: &Region,
    region: &BoxSpec,
    epsilon: f64,
) -> Result<BoxCountResult> {
    let rect = region.rect();
    let grid = BoxGrid::new(&rect, epsilon)?;
    let clearance = domain.rect_clearance(&rect);
    if epsilon >= clearance {
        return Err(Error::EpsilonTooLarge { epsilon, clearance });
    }
    let mut hit = vec![false; grid.len()];
    // Doubled box j spans [(2j - 1)ε, (2j + 3)ε] from the grid corner, so every
    // box edge lies on a line at an odd multiple of ε. Between two such lines
    // (slab k) a point lies in exactly the doubled boxes k and k + 1.
    let slab = |x: f64, origin: f64| {
        let t = ((x - origin) / epsilon - 1.0) / 2.0;
        let k = t.floor();
        (t - k > 1e-9 && k + 1.0 - t > 1e-9).then_some(k as i64)
    };
    let range = |lo: f64, hi: f64, origin: f64, n: usize| {
        let j0 = (((lo - origin) / epsilon - 3.0) / 2.0 - 1e-9).ceil().max(0.0) as i64;
        let j1 = ((((hi - origin) / epsilon + 1.0) / 2.0 + 1e-9).floor() as i64).min(n as i64 - 1);
        (j0, j1)
    };
    let mut last = None;
    for (a, b) in segments {
        let (sa, sb) = ((slab(a.x, grid.min.x), slab(a.y, grid.min.y)), (slab(b.x, grid.min.x), slab(b.y, grid.min.y)));
        if let (Some(kx), Some(ky)) = sa {
            if sa == sb {
                if last != Some((kx, ky)) {
                    last = Some((kx, ky));
                    for row in ky.max(0)..=(ky + 1).min(grid.rows as i64 - 1) {
                        for col in kx.max(0)..=(kx + 1).min(grid.cols as i64 - 1) {
                            hit[row as usize * grid.cols + col as usize] = true;
                        }
                    }
                }
                continue;
            }
        }
        let (c0, c1) = range(a.x.min(b.x), a.x.max(b.x), grid.min.x, grid.cols);
        let (r0, r1) = range(a.y.min(b.y), a.y.max(b.y), grid.min.y, grid.rows);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let i = row as usize * grid.cols + col as usize;
                if !hit[i] {
                    hit[i] = grid.cell(i, 2.0).intersects_segment(a, b);
                }
            }
        }
    }
    let boxes_hit: Vec<usize> = (0..grid.len()).filter(|&i| hit[i]).collect();
    Ok(BoxCountResult { epsilon, count: boxes_hit.len(), boxes_hit, total: grid.len() })
}

/// The reference domain `B₁ = [−1, 1]²` with marks at `−i` and `i`.
pub fn unit_box_domain(eta: f64) -> Result<Arc<LatticeDomain>> {
    let spec = JordanDomainSpec::square(BoxSpec::new(Point::new(0.0, 0.0), 1.0))
        .with_marks(&[("-i", Point::new(0.0, -1.0)), ("i", Point::new(0.0, 1.0))]);
    Ok(Arc::new(LatticeDomain::build(&spec, eta)?))
}

/// Interface of a fresh sample on `domain` between marks `a` and `b`.
pub fn sample_interface(domain: &Arc<LatticeDomain>, stream: RngStream, a: &str, b: &str) -> Result<DiscreteCurve> {
    let c = Coloring::sample(domain, stream).with_boundary(a, b)?;
    trace_interface(&c, a, b)
}

/// Content of the curve inside `Q₀ = B_ε(0)`, over `r ∈ [4η, ε/4]`.
pub fn centered_content(curve: &DiscreteCurve, epsilon: f64) -> Result<f64> {
    let shape = Shape::clipped(curve, &BoxSpec::new(Point::new(0.0, 0.0), epsilon).rect());
    if shape.is_empty() {
        return Ok(0.0);
    }
    let lo = 4.0 * curve.eta;
    let hi = (epsilon / 4.0).max(lo);
    Ok(minkowski_estimate(&shape, 1.75, &geometric_grid(lo, hi), Some((lo, hi)))?.plateau_estimate)
}

/// Per-trial result of the `β_ε` experiment: `None` when the curve misses `2Q₀`.
pub fn beta_trial(domain: &Arc<LatticeDomain>, epsilon: f64, stream: RngStream) -> Result<Option<f64>> {
    let curve = sample_interface(domain, stream, "-i", "i")?;
    let doubled = BoxSpec::new(Point::new(0.0, 0.0), 2.0 * epsilon).rect();
    if !curve.segments().any(|(a, b)| doubled.intersects_segment(a, b)) {
        return Ok(None);
    }
    Ok(Some(centered_content(&curve, epsilon)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub epsilon: f64,
    pub eta: f64,
    pub beta: f64,
    pub stderr: f64,
    pub hits: u64,
    pub trials: u64,
}

/// Mean and standard error of `values`, summed in fixed order.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0) / n).sqrt())
}

/// Estimates `β_ε = E[content of γ ∩ Q₀ | γ meets 2Q₀]` for interfaces on `B₁` at mesh `eta`.
pub fn beta_estimate(epsilon: f64, eta: f64, trials: u64, master_seed: u64) -> Result<BetaEstimate> {
    if !(epsilon > 0.0) || 2.0 * epsilon >= 1.0 {
        return Err(Error::NoHits);
    }
    let domain = unit_box_domain(eta)?;
    let results: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| beta_trial(&domain, epsilon, RngStream::new(master_seed, t)))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = results.into_iter().flatten().collect();
    if values.is_empty() {
        return Err(Error::NoHits);
    }
    let (beta, stderr) = mean_stderr(&values);
    Ok(BetaEstimate { epsilon, eta, beta, stderr, hits: values.len() as u64, trials })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: Point,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub atoms: Vec<Atom>,
    /// `c_l` or `c_p`.
    pub constant: f64,
    /// The arm-probability estimate used for the normalization.
    pub alpha_hat: f64,
}

impl AtomicMeasure {
    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.atoms.iter().map(|a| a.mass).collect::<Vec<_>>())
    }

    /// Atoms in the half-open rectangle `[min, max)`.
    pub fn restrict(&self, rect: &Rect) -> AtomicMeasure {
        AtomicMeasure {
            atoms: self.atoms.iter().copied().filter(|a| rect.contains_half_open(a.location)).collect(),
            ..self.clone()
        }
    }
}

fn atom_mass(eta: f64, alpha_hat: f64, c: f64) -> Result<f64> {
    if !(alpha_hat > 0.0 && alpha_hat <= 1.0) {
        return Err(Error::ConfigInvalid(format!("arm probability {alpha_hat} must lie in (0, 1]")));
    }
    if !(c > 0.0) {
        return Err(Error::ConfigInvalid(format!("normalizing constant {c} must be positive")));
    }
    Ok(c * eta * eta / alpha_hat)
}

/// `τ_η`: mass `c_l·η²/α̂₂` at the midpoint of every traversed edge.
pub fn interface_measure(curve: &DiscreteCurve, alpha2_hat: f64, c_l: f64) -> Result<AtomicMeasure> {
    let mass = atom_mass(curve.eta, alpha2_hat, c_l)?;
    Ok(AtomicMeasure {
        atoms: curve.edges.iter().map(|e| Atom { location: e.midpoint(curve.eta), mass }).collect(),
        constant: c_l,
        alpha_hat: alpha2_hat,
    })
}

/// `μ_η`: mass `c_p·η²/α̂₄` at every pivotal site.
pub fn pivotal_measure(pivots: &PivotalSet, eta: f64, alpha4_hat: f64, c_p: f64) -> Result<AtomicMeasure> {
    let mass = atom_mass(eta, alpha4_hat, c_p)?;
    Ok(AtomicMeasure {
        atoms: pivots.sites.iter().map(|s| Atom { location: s.position(eta), mass }).collect(),
        constant: c_p,
        alpha_hat: alpha4_hat,
    })
}
