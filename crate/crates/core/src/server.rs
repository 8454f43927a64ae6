//! The aggregation server: client subsampling, secret-shared upload intake,
//! the two-stage direction filter, amplitude clipping with secure
//! aggregation, the adaptive clip bound, and noise plus post-processing on
//! the revealed mean.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::client::Upload;
use crate::dbscan;
use crate::mpc::backend::{Backend, SecScalar, SecVec};
use crate::mpc::{LABEL_AGGREGATE, LABEL_CLIP};
use crate::privacy::{DpConfig, DpLedger};
use crate::{Error, Result};

/// Adaptive clip bound state: the current bound, the target unclipped
/// ratio, and the update rate.
#[derive(Clone, Copy, Debug)]
pub struct ClipperState {
    pub c: f64,
    pub gamma: f64,
    pub eta_c: f64,
}

/// One client's upload held as backend values.
pub struct SharedUpload {
    pub direction: SecVec,
    pub amplitude: SecScalar,
    pub last_direction: SecVec,
}

/// Shares a plaintext upload under the backend.
pub fn share_upload(backend: &mut Backend, up: &Upload) -> Result<SharedUpload> {
    Ok(SharedUpload {
        direction: backend.share_vec(&up.direction)?,
        amplitude: backend.share_scalar(up.amplitude)?,
        last_direction: backend.share_vec(&up.last_direction)?,
    })
}

/// Uniformly random ceil(q * n_total) distinct client indices, ascending.
pub fn subsample(n_total: usize, q: f64, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!("subsample fraction must be in (0, 1], got {q}")));
    }
    // the epsilon guard keeps binary fractions like 0.4 * 100 from
    // rounding up to 41
    let count = ((q * n_total as f64) - 1e-9).ceil().max(1.0) as usize;
    let count = count.min(n_total);
    let mut order: Vec<usize> = (0..n_total).collect();
    for i in 0..count {
        let j = rng.gen_range(i..n_total);
        order.swap(i, j);
    }
    order.truncate(count);
    order.sort_unstable();
    Ok(order)
}

/// Two-stage filter: cluster full directions, then the survivors'
/// last-layer directions; returns positions into `uploads` of the uploads
/// kept, or None when either stage finds no majority.
pub fn filter_uploads(
    backend: &mut Backend,
    uploads: &[SharedUpload],
) -> Result<Option<Vec<usize>>> {
    if uploads.len() < 2 {
        return Err(Error::EmptyInput("filter needs at least two uploads"));
    }
    let directions: Vec<SecVec> = uploads.iter().map(|u| u.direction.clone()).collect();
    let (stage1, _) = dbscan::auto_dbscan(backend, &directions)?;
    if stage1.is_empty() {
        return Ok(None);
    }
    let last: Vec<SecVec> = stage1.iter().map(|&i| uploads[i].last_direction.clone()).collect();
    let (stage2, _) = dbscan::auto_dbscan(backend, &last)?;
    if stage2.is_empty() {
        return Ok(None);
    }
    Ok(Some(stage2.iter().map(|&i| stage1[i]).collect()))
}

/// Clips each kept amplitude to c through the comparison gate, accumulates
/// the amplitude-weighted directions as a backend vector, and reports the
/// fraction that needed no clipping.
pub fn clip_and_aggregate(
    backend: &mut Backend,
    uploads: &[SharedUpload],
    kept: &[usize],
    c: f64,
) -> Result<(SecVec, f64)> {
    if kept.is_empty() {
        return Err(Error::EmptyInput("clip_and_aggregate needs kept uploads"));
    }
    let c_shared = backend.constant(c)?;
    let dim = uploads[kept[0]].direction.len();
    let mut sum = backend.zero_vec(dim);
    let mut unclipped = 0usize;
    for &i in kept {
        let exceeded = backend.less_than(&c_shared, &uploads[i].amplitude, LABEL_CLIP)?;
        let amp = if exceeded { c_shared } else { uploads[i].amplitude };
        if !exceeded {
            unclipped += 1;
        }
        let contribution = backend.vec_times_scalar(&uploads[i].direction, &amp)?;
        sum = backend.add_vec(&sum, &contribution)?;
    }
    Ok((sum, unclipped as f64 / kept.len() as f64))
}

/// c * exp(-eta_c * (gamma_hat - gamma)).
pub fn update_clip(cs: &ClipperState, gamma_hat: f64) -> f64 {
    cs.c * (-cs.eta_c * (gamma_hat - cs.gamma)).exp()
}

/// Noise on the sum, mean over m, then a norm cap at c.
pub fn add_noise_and_postprocess(
    sum: &[f64],
    m: usize,
    c: f64,
    sigma: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidArgument("aggregate divisor m must be at least 1".into()));
    }
    if sigma < 0.0 {
        return Err(Error::InvalidArgument(format!("noise multiplier must be nonnegative, got {sigma}")));
    }
    let mut out: Vec<f64> = sum
        .iter()
        .map(|&s| (s + sigma * c * rng.sample::<f64, _>(StandardNormal)) / m as f64)
        .collect();
    let norm: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > c {
        let scale = c / norm;
        for x in &mut out {
            *x *= scale;
        }
    }
    Ok(out)
}

/// What one aggregation round produced. `kept` holds positions into the
/// round's upload list; None means the filter found no majority, the
/// broadcast is zero, and neither the clip bound nor the ledger moved.
pub struct RoundOutcome {
    pub kept: Option<Vec<usize>>,
    pub gamma_hat: Option<f64>,
    pub broadcast: Vec<f64>,
    pub clip_used: f64,
}

/// Aggregation with a predetermined keep set (None = no consensus):
/// clip and sum, reveal, account, noise and post-process, then update the
/// clip bound. The noise scale uses the bound that clipped this round.
pub fn finish_round(
    backend: &mut Backend,
    uploads: &[SharedUpload],
    kept: Option<Vec<usize>>,
    clipper: &mut ClipperState,
    ledger: &mut DpLedger,
    dp: &DpConfig,
    n_total: usize,
    rng: &mut impl Rng,
) -> Result<RoundOutcome> {
    let clip_used = clipper.c;
    let Some(kept) = kept else {
        let dim = uploads.first().map_or(0, |u| u.direction.len());
        return Ok(RoundOutcome {
            kept: None,
            gamma_hat: None,
            broadcast: vec![0.0; dim],
            clip_used,
        });
    };
    let (sum_sec, gamma_hat) = clip_and_aggregate(backend, uploads, &kept, clipper.c)?;
    let sum = backend.reveal_vec(&sum_sec, LABEL_AGGREGATE);
    let m = kept.len();
    ledger.append(m as f64 / n_total as f64, dp.sigma)?;
    let broadcast = add_noise_and_postprocess(&sum, m, clipper.c, dp.sigma, rng)?;
    clipper.c = update_clip(clipper, gamma_hat);
    Ok(RoundOutcome { kept: Some(kept), gamma_hat: Some(gamma_hat), broadcast, clip_used })
}

/// Full server half of a round over already-shared uploads: filter (unless
/// the defense is disabled, in which case everything is kept) and finish.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_round(
    backend: &mut Backend,
    uploads: &[SharedUpload],
    clipper: &mut ClipperState,
    ledger: &mut DpLedger,
    dp: &DpConfig,
    n_total: usize,
    defense_enabled: bool,
    rng: &mut impl Rng,
) -> Result<RoundOutcome> {
    let kept = if defense_enabled {
        filter_uploads(backend, uploads)?
    } else {
        Some((0..uploads.len()).collect())
    };
    finish_round(backend, uploads, kept, clipper, ledger, dp, n_total, rng)
}
