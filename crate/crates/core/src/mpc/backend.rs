//! Execution backends for the aggregation pipeline.
//!
//! The `Shared` backend runs every arithmetic step on two-party secret
//! shares; the `Ideal` backend runs the same steps on plaintext reals with
//! identical reveal logging, so the two modes are interchangeable for
//! auditing and should agree within fixed-point tolerance.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{
    dot_shared, less_than_shared, mul_shared, reveal, reveal_scalar, share_scalar, share_vector,
    truncate, RevealLog, SharedScalar, SharedVector, TripleDealer,
};
use crate::{Error, Result};

/// Which arithmetic the backend runs on.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BackendMode {
    Ideal,
    Shared,
}

impl std::str::FromStr for BackendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(BackendMode::Ideal),
            "shared" => Ok(BackendMode::Shared),
            other => Err(Error::InvalidArgument(format!("unknown backend `{other}`"))),
        }
    }
}

/// A scalar living on one backend.
#[derive(Clone, Copy, Debug)]
pub enum SecScalar {
    Ideal(f64),
    Shared(SharedScalar),
}

/// A vector living on one backend.
#[derive(Clone, Debug)]
pub enum SecVec {
    Ideal(Vec<f64>),
    Shared(SharedVector),
}

impl SecVec {
    pub fn len(&self) -> usize {
        match self {
            SecVec::Ideal(v) => v.len(),
            SecVec::Shared(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> SecScalar {
        match self {
            SecVec::Ideal(v) => SecScalar::Ideal(v[i]),
            SecVec::Shared(v) => SecScalar::Shared(v.get(i)),
        }
    }
}

/// Backend state: triple dealer, sharing randomness, and the reveal log.
pub struct Backend {
    mode: BackendMode,
    log: RevealLog,
    dealer: TripleDealer,
    share_rng: ChaCha20Rng,
}

impl Backend {
    pub fn new(mode: BackendMode, seed: u64) -> Self {
        Self {
            mode,
            log: RevealLog::new(),
            dealer: TripleDealer::new(seed ^ 0x7472_6970_6c65),
            share_rng: ChaCha20Rng::seed_from_u64(seed ^ 0x7368_6172_6573),
        }
    }

    pub fn mode(&self) -> BackendMode {
        self.mode
    }

    pub fn set_round(&mut self, round: u32) {
        self.log.set_round(round);
    }

    pub fn log(&self) -> &RevealLog {
        &self.log
    }

    pub fn share_vec(&mut self, xs: &[f64]) -> Result<SecVec> {
        match self.mode {
            BackendMode::Ideal => Ok(SecVec::Ideal(xs.to_vec())),
            BackendMode::Shared => Ok(SecVec::Shared(share_vector(xs, &mut self.share_rng)?)),
        }
    }

    pub fn share_scalar(&mut self, x: f64) -> Result<SecScalar> {
        match self.mode {
            BackendMode::Ideal => Ok(SecScalar::Ideal(x)),
            BackendMode::Shared => Ok(SecScalar::Shared(share_scalar(x, &mut self.share_rng)?)),
        }
    }

    /// Trivial embedding of a public constant; deterministic.
    pub fn constant(&self, x: f64) -> Result<SecScalar> {
        match self.mode {
            BackendMode::Ideal => Ok(SecScalar::Ideal(x)),
            BackendMode::Shared => Ok(SecScalar::Shared(SharedScalar::from_public(x)?)),
        }
    }

    pub fn zero_scalar(&self) -> SecScalar {
        match self.mode {
            BackendMode::Ideal => SecScalar::Ideal(0.0),
            BackendMode::Shared => SecScalar::Shared(SharedScalar::zero()),
        }
    }

    pub fn zero_vec(&self, len: usize) -> SecVec {
        match self.mode {
            BackendMode::Ideal => SecVec::Ideal(vec![0.0; len]),
            BackendMode::Shared => {
                SecVec::Shared(SharedVector::from_scalars(&vec![SharedScalar::zero(); len]))
            }
        }
    }

    pub fn add_scalar(&self, a: &SecScalar, b: &SecScalar) -> Result<SecScalar> {
        match (a, b) {
            (SecScalar::Ideal(x), SecScalar::Ideal(y)) => Ok(SecScalar::Ideal(x + y)),
            (SecScalar::Shared(x), SecScalar::Shared(y)) => Ok(SecScalar::Shared(x.add(y))),
            _ => Err(Error::BackendMismatch),
        }
    }

    pub fn sub_scalar(&self, a: &SecScalar, b: &SecScalar) -> Result<SecScalar> {
        match (a, b) {
            (SecScalar::Ideal(x), SecScalar::Ideal(y)) => Ok(SecScalar::Ideal(x - y)),
            (SecScalar::Shared(x), SecScalar::Shared(y)) => Ok(SecScalar::Shared(x.sub(y))),
            _ => Err(Error::BackendMismatch),
        }
    }

    /// Multiplies by a public non-negative integer; exact on both backends.
    pub fn scale_int(&self, a: &SecScalar, k: u64) -> SecScalar {
        match a {
            SecScalar::Ideal(x) => SecScalar::Ideal(x * k as f64),
            SecScalar::Shared(x) => SecScalar::Shared(x.scale_int(k)),
        }
    }

    pub fn add_vec(&self, a: &SecVec, b: &SecVec) -> Result<SecVec> {
        match (a, b) {
            (SecVec::Ideal(x), SecVec::Ideal(y)) => {
                if x.len() != y.len() {
                    return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
                }
                Ok(SecVec::Ideal(x.iter().zip(y).map(|(u, v)| u + v).collect()))
            }
            (SecVec::Shared(x), SecVec::Shared(y)) => Ok(SecVec::Shared(x.add(y)?)),
            _ => Err(Error::BackendMismatch),
        }
    }

    pub fn sub_vec(&self, a: &SecVec, b: &SecVec) -> Result<SecVec> {
        match (a, b) {
            (SecVec::Ideal(x), SecVec::Ideal(y)) => {
                if x.len() != y.len() {
                    return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
                }
                Ok(SecVec::Ideal(x.iter().zip(y).map(|(u, v)| u - v).collect()))
            }
            (SecVec::Shared(x), SecVec::Shared(y)) => Ok(SecVec::Shared(x.sub(y)?)),
            _ => Err(Error::BackendMismatch),
        }
    }

    pub fn mul(&mut self, a: &SecScalar, b: &SecScalar) -> Result<SecScalar> {
        match (a, b) {
            (SecScalar::Ideal(x), SecScalar::Ideal(y)) => Ok(SecScalar::Ideal(x * y)),
            (SecScalar::Shared(x), SecScalar::Shared(y)) => {
                let mut t = self.dealer.triple();
                Ok(SecScalar::Shared(mul_shared(x, y, &mut t)?))
            }
            _ => Err(Error::BackendMismatch),
        }
    }

    pub fn dot(&mut self, a: &SecVec, b: &SecVec) -> Result<SecScalar> {
        match (a, b) {
            (SecVec::Ideal(x), SecVec::Ideal(y)) => {
                if x.len() != y.len() {
                    return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
                }
                Ok(SecScalar::Ideal(x.iter().zip(y).map(|(u, v)| u * v).sum()))
            }
            (SecVec::Shared(x), SecVec::Shared(y)) => {
                let mut ts = self.dealer.triples(x.len());
                Ok(SecScalar::Shared(dot_shared(x, y, &mut ts)?))
            }
            _ => Err(Error::BackendMismatch),
        }
    }

    /// Packs scalars of this backend's mode into a vector value.
    pub fn collect_vec(&self, xs: &[SecScalar]) -> Result<SecVec> {
        match self.mode {
            BackendMode::Ideal => {
                let mut out = Vec::with_capacity(xs.len());
                for x in xs {
                    match x {
                        SecScalar::Ideal(v) => out.push(*v),
                        SecScalar::Shared(_) => return Err(Error::BackendMismatch),
                    }
                }
                Ok(SecVec::Ideal(out))
            }
            BackendMode::Shared => {
                let mut out = Vec::with_capacity(xs.len());
                for x in xs {
                    match x {
                        SecScalar::Shared(v) => out.push(*v),
                        SecScalar::Ideal(_) => return Err(Error::BackendMismatch),
                    }
                }
                Ok(SecVec::Shared(SharedVector::from_scalars(&out)))
            }
        }
    }

    /// Dot product over parallel slices of scalars; one truncation total
    /// under the shared backend, like `dot`.
    pub fn dot_scalars(&mut self, a: &[SecScalar], b: &[SecScalar]) -> Result<SecScalar> {
        let va = self.collect_vec(a)?;
        let vb = self.collect_vec(b)?;
        self.dot(&va, &vb)
    }

    /// Element-wise product of a vector with a shared scalar.
    pub fn vec_times_scalar(&mut self, v: &SecVec, s: &SecScalar) -> Result<SecVec> {
        match (v, s) {
            (SecVec::Ideal(x), SecScalar::Ideal(k)) => {
                Ok(SecVec::Ideal(x.iter().map(|u| u * k).collect()))
            }
            (SecVec::Shared(x), SecScalar::Shared(k)) => {
                let mut out = Vec::with_capacity(x.len());
                for i in 0..x.len() {
                    let mut t = self.dealer.triple();
                    out.push(mul_shared(&x.get(i), k, &mut t)?);
                }
                Ok(SecVec::Shared(SharedVector::from_scalars(&out)))
            }
            _ => Err(Error::BackendMismatch),
        }
    }

    /// Element-wise product with a public constant.
    pub fn vec_times_public(&self, v: &SecVec, k: f64) -> Result<SecVec> {
        match v {
            SecVec::Ideal(x) => Ok(SecVec::Ideal(x.iter().map(|u| u * k).collect())),
            SecVec::Shared(x) => {
                let enc = super::encode(k)?;
                let mut out = Vec::with_capacity(x.len());
                for i in 0..x.len() {
                    out.push(truncate(&x.get(i).scale_int(enc)));
                }
                Ok(SecVec::Shared(SharedVector::from_scalars(&out)))
            }
        }
    }

    /// Opens the comparison bit a < b to the server and logs it.
    pub fn less_than(&mut self, a: &SecScalar, b: &SecScalar, label: &str) -> Result<bool> {
        match (a, b) {
            (SecScalar::Ideal(x), SecScalar::Ideal(y)) => {
                self.log.append(label, 1);
                Ok(x < y)
            }
            (SecScalar::Shared(x), SecScalar::Shared(y)) => {
                Ok(less_than_shared(x, y, label, &mut self.log))
            }
            _ => Err(Error::BackendMismatch),
        }
    }

    /// Opens a vector to the server and logs the event.
    pub fn reveal_vec(&mut self, v: &SecVec, label: &str) -> Vec<f64> {
        match v {
            SecVec::Ideal(x) => {
                self.log.append(label, x.len());
                x.clone()
            }
            SecVec::Shared(x) => reveal(x, label, &mut self.log),
        }
    }

    /// Opens a scalar to the server and logs the event.
    pub fn reveal_scalar(&mut self, s: &SecScalar, label: &str) -> f64 {
        match s {
            SecScalar::Ideal(x) => {
                self.log.append(label, 1);
                *x
            }
            SecScalar::Shared(x) => reveal_scalar(x, label, &mut self.log),
        }
    }
}
