//! Differential-privacy accounting for the subsampled Gaussian mechanism:
//! a Renyi-divergence accountant over a fixed order grid and a log-moment
//! accountant evaluated by quadrature, both tracked as running per-order
//! sums so a query after any round is cheap.

use std::collections::HashMap;

use crate::{Error, Result};

/// Noise multiplier (relative to the clip bound) and the fixed delta.
#[derive(Clone, Copy, Debug)]
pub struct DpConfig {
    pub sigma: f64,
    pub delta: f64,
}

const MOMENT_ORDERS: usize = 32;
const STEP_DIVISOR: f64 = 200.0;

/// Renyi order grid 1.25, 1.50, ..., 64.00.
pub fn rdp_orders() -> Vec<f64> {
    (5..=256).map(|i| i as f64 * 0.25).collect()
}

fn logsumexp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn ln_binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    let mut acc = 0.0;
    for i in 1..=k {
        acc += ((n - k + i) as f64).ln() - (i as f64).ln();
    }
    acc
}

/// ln E_{z~N(0,sigma^2)}[((1-q) + q e^{(2z-1)/(2 sigma^2)})^alpha] for
/// integer alpha, by the exact binomial expansion.
fn ln_a_int(alpha: u32, q: f64, sigma: f64) -> f64 {
    if q >= 1.0 {
        return (alpha as f64) * (alpha as f64 - 1.0) / (2.0 * sigma * sigma);
    }
    logsumexp((0..=alpha).map(|k| {
        ln_binomial(alpha, k)
            + (alpha - k) as f64 * (1.0 - q).ln()
            + k as f64 * q.ln()
            + (k as f64) * (k as f64 - 1.0) / (2.0 * sigma * sigma)
    }))
}

/// Fractional orders interpolate between the neighboring integers; ln A is
/// log-convex in the order, so the chord is an upper bound.
fn ln_a(alpha: f64, q: f64, sigma: f64) -> f64 {
    if q >= 1.0 {
        return alpha * (alpha - 1.0) / (2.0 * sigma * sigma);
    }
    let lo = alpha.floor();
    let t = alpha - lo;
    if t == 0.0 {
        return ln_a_int(alpha as u32, q, sigma);
    }
    (1.0 - t) * ln_a_int(lo as u32, q, sigma) + t * ln_a_int(lo as u32 + 1, q, sigma)
}

/// Log-moments ln max(E1, E2) at integer orders 1..=MOMENT_ORDERS, by
/// trapezoid quadrature in log space over a grid wide enough for the
/// largest order.
fn log_moments(q: f64, sigma: f64, step_divisor: f64) -> Vec<f64> {
    let lambda_max = MOMENT_ORDERS as f64;
    let bound = (lambda_max + 1.0) + 12.0 * sigma + 2.0;
    let dz = sigma / step_divisor;
    let steps = (2.0 * bound / dz).ceil() as usize;
    let var2 = 2.0 * sigma * sigma;
    let ln_norm = (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    // precompute the two log densities and the mixture once
    let mut ln_p0 = Vec::with_capacity(steps + 1);
    let mut ln_mix = Vec::with_capacity(steps + 1);
    let ln_q = if q > 0.0 { q.ln() } else { f64::NEG_INFINITY };
    let ln_1q = if q < 1.0 { (1.0 - q).ln() } else { f64::NEG_INFINITY };
    for i in 0..=steps {
        let z = -bound + i as f64 * dz;
        let p0 = -z * z / var2 - ln_norm;
        let p1 = -(z - 1.0) * (z - 1.0) / var2 - ln_norm;
        ln_p0.push(p0);
        ln_mix.push(logsumexp([ln_1q + p0, ln_q + p1].into_iter()));
    }
    let half = 0.5_f64.ln();
    let weight = |i: usize| if i == 0 || i == steps { half } else { 0.0 };
    (1..=MOMENT_ORDERS)
        .map(|lambda| {
            let l = lambda as f64;
            let e1 = logsumexp(
                (0..=steps).map(|i| weight(i) + ln_p0[i] + l * (ln_p0[i] - ln_mix[i])),
            ) + dz.ln();
            let e2 = logsumexp(
                (0..=steps).map(|i| weight(i) + ln_mix[i] + l * (ln_mix[i] - ln_p0[i])),
            ) + dz.ln();
            e1.max(e2)
        })
        .collect()
}

/// Running composition state: per-round sampling fractions and noise
/// multipliers plus per-order sums for both accountants.
pub struct DpLedger {
    rounds: Vec<(f64, f64)>,
    rdp_sums: Vec<f64>,
    moment_sums: Vec<f64>,
    unbounded: bool,
    rdp_cache: HashMap<(u64, u64), Vec<f64>>,
    moment_cache: HashMap<(u64, u64), Vec<f64>>,
}

impl Default for DpLedger {
    fn default() -> Self {
        Self::new()
    }
}

impl DpLedger {
    pub fn new() -> Self {
        Self {
            rounds: Vec::new(),
            rdp_sums: vec![0.0; rdp_orders().len()],
            moment_sums: vec![0.0; MOMENT_ORDERS],
            unbounded: false,
            rdp_cache: HashMap::new(),
            moment_cache: HashMap::new(),
        }
    }

    pub fn rounds(&self) -> usize {
        self.rounds.len()
    }

    /// Records one aggregating round. A zero noise multiplier makes both
    /// epsilon queries return the unbounded sentinel from here on.
    pub fn append(&mut self, q_t: f64, sigma: f64) -> Result<()> {
        if !(q_t > 0.0 && q_t <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "sampling fraction must be in (0, 1], got {q_t}"
            )));
        }
        if sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise multiplier must be nonnegative, got {sigma}"
            )));
        }
        self.rounds.push((q_t, sigma));
        if sigma == 0.0 {
            self.unbounded = true;
            return Ok(());
        }
        let key = (q_t.to_bits(), sigma.to_bits());
        let rdp = self
            .rdp_cache
            .entry(key)
            .or_insert_with(|| rdp_orders().iter().map(|&a| ln_a(a, q_t, sigma)).collect());
        for (sum, add) in self.rdp_sums.iter_mut().zip(rdp.iter()) {
            *sum += add;
        }
        let moments = self
            .moment_cache
            .entry(key)
            .or_insert_with(|| log_moments(q_t, sigma, STEP_DIVISOR));
        for (sum, add) in self.moment_sums.iter_mut().zip(moments.iter()) {
            *sum += add;
        }
        Ok(())
    }

    /// Cumulative epsilon under the Renyi accountant; 0 with no rounds,
    /// infinite once any round ran without noise.
    pub fn rdp_epsilon(&self, delta: f64) -> f64 {
        if self.unbounded {
            return f64::INFINITY;
        }
        if self.rounds.is_empty() {
            return 0.0;
        }
        let ln_inv_delta = (1.0 / delta).ln();
        rdp_orders()
            .iter()
            .zip(&self.rdp_sums)
            .map(|(&a, &sum)| (sum + ln_inv_delta) / (a - 1.0))
            .fold(f64::INFINITY, f64::min)
    }

    /// Cumulative epsilon under the log-moment accountant; same sentinel
    /// conventions as the Renyi query.
    pub fn moments_epsilon(&self, delta: f64) -> f64 {
        if self.unbounded {
            return f64::INFINITY;
        }
        if self.rounds.is_empty() {
            return 0.0;
        }
        let ln_inv_delta = (1.0 / delta).ln();
        self.moment_sums
            .iter()
            .enumerate()
            .map(|(i, &sum)| (sum + ln_inv_delta) / (i + 1) as f64)
            .fold(f64::INFINITY, f64::min)
    }
}
