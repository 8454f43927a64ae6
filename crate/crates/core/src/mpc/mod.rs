//! Two-party additive secret sharing over the 64-bit ring with fixed-point
//! values (16 fractional bits).
//!
//! Both logical parties run in lockstep inside one process. Multiplication
//! uses Beaver triples from a trusted in-process dealer; comparison is an
//! ideal functionality that sees only masked differences and returns the
//! sign bit. Every value or bit opened to the server is recorded in a
//! [`RevealLog`]. Dealer traffic is not a revelation and is not logged.

pub mod backend;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::{Error, Result};

/// Fractional bits of the fixed-point encoding.
pub const FRAC_BITS: u32 = 16;
const SCALE: f64 = (1u64 << FRAC_BITS) as f64;
/// Largest encodable magnitude. Values this large still leave headroom for
/// the doubled scale of a raw product plus sums over desk-scale cohorts.
pub const MAX_ABS: f64 = (1u64 << 45) as f64;

/// Reveal-log label for adjacency and ordering bits opened by the filter.
pub const LABEL_ADJACENCY: &str = "adjacency-bit";
/// Reveal-log label for amplitude-clipping bits.
pub const LABEL_CLIP: &str = "clip-bit";
/// Reveal-log label for the final aggregated update.
pub const LABEL_AGGREGATE: &str = "global-aggregate";

/// Encodes a real into the ring: round(x * 2^16) in two's complement.
pub fn encode(x: f64) -> Result<u64> {
    if !x.is_finite() || x.abs() >= MAX_ABS {
        return Err(Error::EncodeRange(x));
    }
    Ok(((x * SCALE).round() as i64) as u64)
}

/// Decodes a ring element, interpreting the top half as negative.
pub fn decode(v: u64) -> f64 {
    (v as i64) as f64 / SCALE
}

/// Identifies one of the two logical parties.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Party {
    P0,
    P1,
}

/// One party's additive share of a ring element.
#[derive(Clone, Copy, Debug)]
pub struct Share {
    pub party: Party,
    pub value: u64,
}

/// Both parties' shares of one ring element, held by the lockstep runtime.
#[derive(Clone, Copy, Debug, Default)]
pub struct SharedScalar {
    p0: u64,
    p1: u64,
}

impl SharedScalar {
    pub fn from_raw(p0: u64, p1: u64) -> Self {
        Self { p0, p1 }
    }

    pub fn zero() -> Self {
        Self { p0: 0, p1: 0 }
    }

    /// Trivial sharing of a public constant; no randomness is consumed.
    pub fn from_public(x: f64) -> Result<Self> {
        Ok(Self { p0: encode(x)?, p1: 0 })
    }

    pub fn shares(&self) -> (Share, Share) {
        (
            Share { party: Party::P0, value: self.p0 },
            Share { party: Party::P1, value: self.p1 },
        )
    }

    pub fn reconstruct_raw(&self) -> u64 {
        self.p0.wrapping_add(self.p1)
    }

    pub fn reconstruct(&self) -> f64 {
        decode(self.reconstruct_raw())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            p0: self.p0.wrapping_add(other.p0),
            p1: self.p1.wrapping_add(other.p1),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            p0: self.p0.wrapping_sub(other.p0),
            p1: self.p1.wrapping_sub(other.p1),
        }
    }

    /// Multiplies by a public ring integer; exact, no truncation.
    pub fn scale_int(&self, k: u64) -> Self {
        Self {
            p0: self.p0.wrapping_mul(k),
            p1: self.p1.wrapping_mul(k),
        }
    }
}

/// Both parties' shares of a vector of ring elements.
#[derive(Clone, Debug)]
pub struct SharedVector {
    p0: Vec<u64>,
    p1: Vec<u64>,
}

impl SharedVector {
    pub fn len(&self) -> usize {
        self.p0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p0.is_empty()
    }

    pub fn get(&self, i: usize) -> SharedScalar {
        SharedScalar { p0: self.p0[i], p1: self.p1[i] }
    }

    pub fn from_scalars(scalars: &[SharedScalar]) -> Self {
        Self {
            p0: scalars.iter().map(|s| s.p0).collect(),
            p1: scalars.iter().map(|s| s.p1).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch { left: self.len(), right: other.len() });
        }
        Ok(Self {
            p0: self.p0.iter().zip(&other.p0).map(|(a, b)| a.wrapping_add(*b)).collect(),
            p1: self.p1.iter().zip(&other.p1).map(|(a, b)| a.wrapping_add(*b)).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch { left: self.len(), right: other.len() });
        }
        Ok(Self {
            p0: self.p0.iter().zip(&other.p0).map(|(a, b)| a.wrapping_sub(*b)).collect(),
            p1: self.p1.iter().zip(&other.p1).map(|(a, b)| a.wrapping_sub(*b)).collect(),
        })
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        self.p0
            .iter()
            .zip(&self.p1)
            .map(|(a, b)| decode(a.wrapping_add(*b)))
            .collect()
    }
}

/// Splits an encoded value into two uniformly masked shares.
pub fn share_raw(v: u64, rng: &mut impl Rng) -> SharedScalar {
    let r: u64 = rng.gen();
    SharedScalar { p0: r, p1: v.wrapping_sub(r) }
}

/// Shares one real value.
pub fn share_scalar(x: f64, rng: &mut impl Rng) -> Result<SharedScalar> {
    Ok(share_raw(encode(x)?, rng))
}

/// Shares a real vector element-wise.
pub fn share_vector(xs: &[f64], rng: &mut impl Rng) -> Result<SharedVector> {
    let mut p0 = Vec::with_capacity(xs.len());
    let mut p1 = Vec::with_capacity(xs.len());
    for &x in xs {
        let s = share_raw(encode(x)?, rng);
        p0.push(s.p0);
        p1.push(s.p1);
    }
    Ok(SharedVector { p0, p1 })
}

/// One multiplication triple (a, b, c) with c = a*b in the ring. Single use.
#[derive(Clone, Debug)]
pub struct BeaverTriple {
    a: SharedScalar,
    b: SharedScalar,
    c: SharedScalar,
    used: bool,
}

impl BeaverTriple {
    pub fn is_used(&self) -> bool {
        self.used
    }
}

/// Trusted in-process dealer handing out single-use Beaver triples.
pub struct TripleDealer {
    rng: ChaCha20Rng,
}

impl TripleDealer {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    pub fn triple(&mut self) -> BeaverTriple {
        let a: u64 = self.rng.gen();
        let b: u64 = self.rng.gen();
        let c = a.wrapping_mul(b);
        BeaverTriple {
            a: share_raw(a, &mut self.rng),
            b: share_raw(b, &mut self.rng),
            c: share_raw(c, &mut self.rng),
            used: false,
        }
    }

    pub fn triples(&mut self, n: usize) -> Vec<BeaverTriple> {
        (0..n).map(|_| self.triple()).collect()
    }
}

/// Raw Beaver product at doubled fractional scale; consumes the triple.
fn mul_raw(x: &SharedScalar, y: &SharedScalar, t: &mut BeaverTriple) -> Result<SharedScalar> {
    if t.used {
        return Err(Error::TripleReuse);
    }
    t.used = true;
    // The parties exchange only the masked differences d = x - a, e = y - b.
    let d = x.sub(&t.a).reconstruct_raw();
    let e = y.sub(&t.b).reconstruct_raw();
    let p0 = t
        .c
        .p0
        .wrapping_add(d.wrapping_mul(t.b.p0))
        .wrapping_add(e.wrapping_mul(t.a.p0))
        .wrapping_add(d.wrapping_mul(e));
    let p1 = t
        .c
        .p1
        .wrapping_add(d.wrapping_mul(t.b.p1))
        .wrapping_add(e.wrapping_mul(t.a.p1));
    Ok(SharedScalar { p0, p1 })
}

/// Share-local probabilistic truncation by 2^16; at most one ulp of error
/// for values far from the ring boundary.
pub fn truncate(z: &SharedScalar) -> SharedScalar {
    SharedScalar {
        p0: z.p0 >> FRAC_BITS,
        p1: (z.p1.wrapping_neg() >> FRAC_BITS).wrapping_neg(),
    }
}

/// Fixed-point product of two shared values.
pub fn mul_shared(
    x: &SharedScalar,
    y: &SharedScalar,
    triple: &mut BeaverTriple,
) -> Result<SharedScalar> {
    Ok(truncate(&mul_raw(x, y, triple)?))
}

/// Fixed-point dot product; accumulates raw products at doubled scale and
/// truncates once. Needs one triple per coordinate.
pub fn dot_shared(
    a: &SharedVector,
    b: &SharedVector,
    triples: &mut [BeaverTriple],
) -> Result<SharedScalar> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if triples.len() < a.len() {
        return Err(Error::TripleExhausted { needed: a.len(), available: triples.len() });
    }
    let mut acc = SharedScalar::zero();
    for i in 0..a.len() {
        acc = acc.add(&mul_raw(&a.get(i), &b.get(i), &mut triples[i])?);
    }
    Ok(truncate(&acc))
}

/// Comparison via the ideal dealer functionality: the dealer reconstructs
/// the masked difference and returns only its sign bit. The bit is opened
/// to the server, so it is appended to the log.
pub fn less_than_shared(
    a: &SharedScalar,
    b: &SharedScalar,
    label: &str,
    log: &mut RevealLog,
) -> bool {
    let diff = a.sub(b).reconstruct_raw();
    log.append(label, 1);
    (diff as i64) < 0
}

/// Opens a shared vector to the server and logs the event.
pub fn reveal(v: &SharedVector, label: &str, log: &mut RevealLog) -> Vec<f64> {
    log.append(label, v.len());
    v.reconstruct()
}

/// Opens a shared scalar to the server and logs the event.
pub fn reveal_scalar(s: &SharedScalar, label: &str, log: &mut RevealLog) -> f64 {
    log.append(label, 1);
    s.reconstruct()
}

/// One opened value: which round, what it was, and how many elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevealEntry {
    pub round: u32,
    pub label: String,
    pub len: usize,
}

/// Append-only record of everything opened to the server during a run.
#[derive(Default, Debug, Clone)]
pub struct RevealLog {
    entries: Vec<RevealEntry>,
    round: u32,
}

impl RevealLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_round(&mut self, round: u32) {
        self.round = round;
    }

    pub fn append(&mut self, label: &str, len: usize) {
        self.entries.push(RevealEntry { round: self.round, label: label.to_string(), len });
    }

    pub fn entries(&self) -> &[RevealEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One row per revealed value: round,label,length.
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "round,label,length")?;
        for e in &self.entries {
            writeln!(w, "{},{},{}", e.round, e.label, e.len)?;
        }
        Ok(())
    }
}
