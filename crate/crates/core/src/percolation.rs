//! Critical Bernoulli site percolation on a [`LatticeDomain`].
//!
//! Colors come from a counter-based stream: site `i` of a trial reads bit
//! `i % 32` of word `i / 32` of ChaCha8 keyed by `(master_seed, stream_id)`.
//! A set bit is white.

use crate::error::{Error, Result};
use crate::lattice::{Cell, LatticeDomain, SiteCoord};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Packs the first `n` site bits into 64-bit words.
    pub fn site_bits(&self, n: usize) -> Vec<u64> {
        let mut rng = self.generator();
        let mut bits = vec![0u64; n.div_ceil(64)];
        for w in bits.iter_mut() {
            let lo = rng.next_u32() as u64;
            let hi = rng.next_u32() as u64;
            *w = lo | (hi << 32);
        }
        if n % 64 != 0 {
            if let Some(last) = bits.last_mut() {
                *last &= (1u64 << (n % 64)) - 1;
            }
        }
        bits
    }

    /// Color bit of a single site, read by seeking the stream.
    pub fn site_bit(&self, index: u64) -> bool {
        let mut rng = self.generator();
        rng.set_word_pos((index / 32) as u128);
        (rng.next_u32() >> (index % 32)) & 1 == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Color {
    White,
    Black,
}

impl Color {
    pub fn is_white(self) -> bool {
        self == Color::White
    }

    pub fn opposite(self) -> Color {
        match self {
            Color::White => Color::Black,
            Color::Black => Color::White,
        }
    }

    pub fn from_white(white: bool) -> Color {
        if white {
            Color::White
        } else {
            Color::Black
        }
    }
}

/// Boundary condition by marked boundary edge index: the arc `Δ_{a,b}` is
/// black and `Δ_{b,a}` is white.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub a: usize,
    pub b: usize,
}

/// One percolation sample `ω_η` on a domain, with optional boundary condition.
#[derive(Debug, Clone)]
pub struct Coloring {
    domain: Arc<LatticeDomain>,
    bits: Arc<[u64]>,
    boundary: Option<BoundaryCondition>,
    seed: Option<RngStream>,
}

impl Coloring {
    /// Fresh interior sample; boundary colors unset.
    pub fn sample(domain: &Arc<LatticeDomain>, rng: RngStream) -> Self {
        Self {
            domain: Arc::clone(domain),
            bits: rng.site_bits(domain.num_inner()).into(),
            boundary: None,
            seed: Some(rng),
        }
    }

    pub fn from_fn(domain: &Arc<LatticeDomain>, mut white: impl FnMut(SiteCoord) -> bool) -> Self {
        let mut bits = vec![0u64; domain.num_inner().div_ceil(64)];
        for (i, s) in domain.inner_sites().iter().enumerate() {
            if white(*s) {
                bits[i / 64] |= 1 << (i % 64);
            }
        }
        Self { domain: Arc::clone(domain), bits: bits.into(), boundary: None, seed: None }
    }

    pub fn uniform(domain: &Arc<LatticeDomain>, color: Color) -> Self {
        Self::from_fn(domain, |_| color.is_white())
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn seed(&self) -> Option<RngStream> {
        self.seed
    }

    pub fn boundary_condition(&self) -> Option<BoundaryCondition> {
        self.boundary
    }

    /// Applies the `(a, b)` boundary condition for two marked-point labels.
    pub fn with_boundary(&self, a_label: &str, b_label: &str) -> Result<Coloring> {
        let a = self.domain.marked(a_label)?;
        let b = self.domain.marked(b_label)?;
        if a == b {
            return Err(Error::SameMarkedEdge(a_label.into(), b_label.into()));
        }
        Ok(self.with_boundary_edges(a, b))
    }

    pub fn with_boundary_edges(&self, a: usize, b: usize) -> Coloring {
        Coloring { boundary: Some(BoundaryCondition { a, b }), ..self.clone() }
    }

    pub fn without_boundary(&self) -> Coloring {
        Coloring { boundary: None, ..self.clone() }
    }

    #[inline]
    pub fn inner_white(&self, index: usize) -> bool {
        (self.bits[index / 64] >> (index % 64)) & 1 == 1
    }

    /// Color of an inner or boundary site. Boundary sites need a boundary
    /// condition; outside sites have no color.
    #[inline]
    pub fn is_white(&self, s: SiteCoord) -> Option<bool> {
        match self.domain.cell(s) {
            Cell::Inner(i) => Some(self.inner_white(i as usize)),
            Cell::Boundary(pos) => {
                let bc = self.boundary?;
                Some(!self.domain.arc_contains(bc.a, bc.b, pos as usize))
            }
            Cell::Outside => None,
        }
    }

    pub fn color(&self, s: SiteCoord) -> Option<Color> {
        self.is_white(s).map(Color::from_white)
    }

    pub fn white_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Every interior color flipped; the boundary condition is kept as is.
    pub fn swapped(&self) -> Coloring {
        let n = self.domain.num_inner();
        let mut bits: Vec<u64> = self.bits.iter().map(|w| !w).collect();
        if n % 64 != 0 {
            if let Some(last) = bits.last_mut() {
                *last &= (1u64 << (n % 64)) - 1;
            }
        }
        Coloring { bits: bits.into(), seed: None, ..self.clone() }
    }

    /// The coloring with inner site `index` recolored.
    pub fn flipped(&self, index: usize) -> Coloring {
        let mut bits = self.bits.to_vec();
        bits[index / 64] ^= 1 << (index % 64);
        Coloring { bits: bits.into(), seed: None, ..self.clone() }
    }

    pub fn bits(&self) -> &[u64] {
        &self.bits
    }

    /// Writes the fixture format: one JSON header line, then the interior as
    /// LEB128 run lengths alternating from `first_white`.
    pub fn write_fixture(&self, mut out: impl Write) -> Result<()> {
        let n = self.domain.num_inner();
        let first_white = n > 0 && self.inner_white(0);
        let header = FixtureHeader {
            eta: self.domain.eta(),
            seed: self.seed,
            domain_digest: format!("{:016x}", self.domain.digest()),
            sites: n,
            first_white,
            boundary: self.boundary,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        let mut i = 0;
        let mut current = first_white;
        let mut buf = Vec::new();
        while i < n {
            let start = i;
            while i < n && self.inner_white(i) == current {
                i += 1;
            }
            write_leb128(&mut buf, (i - start) as u64);
            current = !current;
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_fixture(domain: &Arc<LatticeDomain>, mut input: impl Read) -> Result<Coloring> {
        let mut data = Vec::new();
        input.read_to_end(&mut data)?;
        let split = data
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("missing header line".into()))?;
        let header: FixtureHeader = serde_json::from_slice(&data[..split])?;
        if header.domain_digest != format!("{:016x}", domain.digest()) {
            return Err(Error::Format("fixture was written for a different domain".into()));
        }
        let n = domain.num_inner();
        if header.sites != n {
            return Err(Error::Format(format!("expected {n} sites, found {}", header.sites)));
        }
        let mut bits = vec![0u64; n.div_ceil(64)];
        let mut rest = &data[split + 1..];
        let mut i = 0usize;
        let mut current = header.first_white;
        while i < n {
            let len = read_leb128(&mut rest)? as usize;
            if i + len > n {
                return Err(Error::Format("run overflows site count".into()));
            }
            if current {
                for j in i..i + len {
                    bits[j / 64] |= 1 << (j % 64);
                }
            }
            i += len;
            current = !current;
        }
        if !rest.is_empty() {
            return Err(Error::Format("trailing bytes after runs".into()));
        }
        Ok(Coloring {
            domain: Arc::clone(domain),
            bits: bits.into(),
            boundary: header.boundary,
            seed: header.seed,
        })
    }
}

impl PartialEq for Coloring {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.domain, &other.domain) || self.domain.digest() == other.domain.digest())
            && self.bits == other.bits
            && self.boundary == other.boundary
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureHeader {
    eta: f64,
    seed: Option<RngStream>,
    domain_digest: String,
    sites: usize,
    first_white: bool,
    boundary: Option<BoundaryCondition>,
}

fn write_leb128(buf: &mut Vec<u8>, mut x: u64) {
    loop {
        let byte = (x & 0x7f) as u8;
        x >>= 7;
        if x == 0 {
            buf.push(byte);
            return;
        }
        buf.push(byte | 0x80);
    }
}

fn read_leb128(input: &mut &[u8]) -> Result<u64> {
    let mut x = 0u64;
    for shift in (0..64).step_by(7) {
        let (&byte, rest) = input
            .split_first()
            .ok_or_else(|| Error::Format("truncated run length".into()))?;
        *input = rest;
        x |= ((byte & 0x7f) as u64) << shift;
        if byte & 0x80 == 0 {
            return Ok(x);
        }
    }
    Err(Error::Format("run length too long".into()))
}
