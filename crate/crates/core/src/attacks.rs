//! Adversarial behaviors: three upload-crafting attacks (random, robust-mean
//! evasion, coordinate-wise deviation) and three data poisons (label flip,
//! trigger backdoor, edge-case relabeling).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::client::{unitize, Upload};
use crate::model::{self, Batch, ModelLayout};
use crate::{Error, Result};

/// Which adversarial behavior a scenario runs.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AttackKind {
    None,
    /// Pure-noise uploads.
    A1,
    /// Scaled opposite of the colluder mean, tuned against a simulated
    /// robust selector.
    A2,
    /// Coordinate-wise draws just outside the colluder spread.
    A3,
    /// Label flipping l -> L-1-l.
    A4,
    /// Trigger-block backdoor.
    A5,
    /// Low-confidence edge-case relabeling.
    A6,
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttackKind::None),
            "a1" => Ok(AttackKind::A1),
            "a2" => Ok(AttackKind::A2),
            "a3" => Ok(AttackKind::A3),
            "a4" => Ok(AttackKind::A4),
            "a5" => Ok(AttackKind::A5),
            "a6" => Ok(AttackKind::A6),
            other => Err(Error::InvalidArgument(format!("unknown attack `{other}`"))),
        }
    }
}

/// Upload of pure standard-normal noise; the amplitude concentrates near
/// the square root of the parameter count.
pub fn a1_random_upload(layout: &ModelLayout, rng: &mut impl Rng) -> Upload {
    let g: Vec<f64> =
        (0..layout.total_params()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Upload::from_delta(layout, &g)
}

/// Score-based selector over update vectors: each candidate is scored by the
/// sum of squared distances to its n-f-2 nearest peers; lowest score wins,
/// ties toward the lowest index.
pub fn krum_select(vectors: &[Vec<f64>], f: usize) -> usize {
    let n = vectors.len();
    if n < 2 {
        return 0;
    }
    let k = n.saturating_sub(f + 2).clamp(1, n - 1);
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                vectors[i]
                    .iter()
                    .zip(&vectors[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let score: f64 = dists[..k].iter().sum();
        if score < best_score {
            best_score = score;
            best = i;
        }
    }
    best
}

/// Halve-then-bisect search for the largest scale the predicate accepts.
/// Returns the scale and the number of bisection iterations.
pub fn binary_search_scale(
    accepts: impl Fn(f64) -> bool,
    lambda_max: f64,
    eps: f64,
    thresh: f64,
) -> (f64, usize) {
    let mut lambda = lambda_max;
    while !accepts(lambda) {
        lambda /= 2.0;
        if lambda < thresh {
            return (lambda, 0);
        }
    }
    let mut lo = lambda;
    let mut hi = (2.0 * lambda).min(lambda_max);
    let mut iterations = 0;
    while hi - lo >= eps {
        let mid = 0.5 * (lo + hi);
        if accepts(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    (lo, iterations)
}

/// Crafts the colluders' shared upload: the opposite of their mean honest
/// update, scaled as far as a locally simulated selection still picks it.
/// `n` and `f` describe the full round; `lambda_max` starts at the current
/// clip estimate.
pub fn a2_krum_attack(
    colluder_updates: &[Vec<f64>],
    n: usize,
    f: usize,
    eps: f64,
    thresh: f64,
    lambda_max: f64,
) -> Result<Vec<f64>> {
    if colluder_updates.is_empty() {
        return Err(Error::EmptyInput("colluder updates"));
    }
    let dim = colluder_updates[0].len();
    let mut mean = vec![0.0; dim];
    for u in colluder_updates {
        if u.len() != dim {
            return Err(Error::LengthMismatch { left: u.len(), right: dim });
        }
        for (m, v) in mean.iter_mut().zip(u) {
            *m += v / colluder_updates.len() as f64;
        }
    }
    let (dir, norm) = unitize(&mean);
    if norm == 0.0 {
        return Ok(vec![0.0; dim]);
    }
    let crafted = |lambda: f64| -> Vec<f64> { dir.iter().map(|d| -lambda * d).collect() };
    let accepts = |lambda: f64| -> bool {
        let mut pool: Vec<Vec<f64>> = std::iter::repeat(crafted(lambda)).take(f).collect();
        pool.extend(colluder_updates.iter().cloned());
        let _ = n; // the selector sees the local pool; n fixes f's meaning
        krum_select(&pool, f) < f
    };
    let (lambda, _) = binary_search_scale(accepts, lambda_max, eps, thresh);
    Ok(crafted(lambda))
}

/// One adversary's coordinate-wise deviation draw: uniformly below the
/// colluder mean when it is positive, above it otherwise, offset by three
/// to four standard deviations.
pub fn a3_trimmed_mean_attack(
    colluder_updates: &[Vec<f64>],
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if colluder_updates.len() < 2 {
        return Err(Error::InvalidArgument(
            "coordinate-wise deviation needs at least two colluders".into(),
        ));
    }
    let dim = colluder_updates[0].len();
    let count = colluder_updates.len() as f64;
    let mut out = vec![0.0; dim];
    for j in 0..dim {
        let mut mean = 0.0;
        for u in colluder_updates {
            if u.len() != dim {
                return Err(Error::LengthMismatch { left: u.len(), right: dim });
            }
            mean += u[j] / count;
        }
        let var: f64 =
            colluder_updates.iter().map(|u| (u[j] - mean) * (u[j] - mean)).sum::<f64>() / count;
        let s = var.sqrt();
        out[j] = if s == 0.0 {
            mean
        } else if mean > 0.0 {
            rng.gen_range((mean - 4.0 * s)..(mean - 3.0 * s))
        } else {
            rng.gen_range((mean + 3.0 * s)..(mean + 4.0 * s))
        };
    }
    Ok(out)
}

/// Flips round(pdr * n) seeded-chosen labels to their mirror class.
pub fn a4_label_flip(batch: &Batch, classes: usize, pdr: f64, rng: &mut impl Rng) -> Batch {
    let mut out = batch.clone();
    for &i in &poison_indices(batch.len(), pdr, rng) {
        out.labels[i] = classes - 1 - out.labels[i];
    }
    out
}

/// Backdoor trigger: a fixed feature block forced to the batch maximum.
#[derive(Clone, Debug)]
pub struct TriggerSpec {
    pub indices: Vec<usize>,
    pub target: usize,
}

impl TriggerSpec {
    /// Trailing block of side*side features in a flat feature vector.
    pub fn flat_block(features: usize, side: usize, target: usize) -> Result<Self> {
        let block = side * side;
        if block > features {
            return Err(Error::InvalidArgument(format!(
                "trigger block of {block} does not fit {features} features"
            )));
        }
        Ok(Self { indices: (features - block..features).collect(), target })
    }

    /// Top-left side-by-side square of an image laid out row-major.
    pub fn image_square(width: usize, height: usize, side: usize, target: usize) -> Result<Self> {
        if side > width || side > height {
            return Err(Error::InvalidArgument(format!(
                "trigger square of side {side} does not fit a {width}x{height} image"
            )));
        }
        let mut indices = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                indices.push(r * width + c);
            }
        }
        Ok(Self { indices, target })
    }

    fn check_fits(&self, width: usize) -> Result<()> {
        match self.indices.iter().max() {
            Some(&top) if top >= width => Err(Error::InvalidArgument(format!(
                "trigger index {top} out of range for {width} features"
            ))),
            _ => Ok(()),
        }
    }
}

fn batch_max(batch: &Batch) -> f64 {
    batch.features.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Stamps the trigger onto round(pdr * n) samples and relabels them to the
/// trigger target. The stamped value is the batch's maximum feature value.
pub fn a5_backdoor(
    batch: &Batch,
    trigger: &TriggerSpec,
    pdr: f64,
    rng: &mut impl Rng,
) -> Result<Batch> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("backdoor batch"));
    }
    trigger.check_fits(batch.width)?;
    let value = batch_max(batch);
    let mut out = batch.clone();
    for &i in &poison_indices(batch.len(), pdr, rng) {
        let row = &mut out.features[i * out.width..(i + 1) * out.width];
        for &j in &trigger.indices {
            row[j] = value;
        }
        out.labels[i] = trigger.target;
    }
    Ok(out)
}

/// Evaluation set for backdoor accuracy: every sample whose true label is
/// not already the target, stamped with the trigger and relabeled to it.
pub fn backdoor_eval_set(batch: &Batch, trigger: &TriggerSpec) -> Result<Batch> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("backdoor eval batch"));
    }
    trigger.check_fits(batch.width)?;
    let value = batch_max(batch);
    let mut out = Batch::new(batch.width);
    let mut row = vec![0.0; batch.width];
    for i in 0..batch.len() {
        if batch.labels[i] == trigger.target {
            continue;
        }
        row.copy_from_slice(batch.row(i));
        for &j in &trigger.indices {
            row[j] = value;
        }
        out.push(&row, trigger.target);
    }
    Ok(out)
}

/// Edge-case pool: the pool_size correctly classified candidates the model
/// is least confident about, relabeled through `target_map`.
pub fn a6_edge_pool(
    layout: &ModelLayout,
    params: &[f64],
    candidates: &Batch,
    pool_size: usize,
    target_map: &[usize],
) -> Result<Batch> {
    if target_map.len() != layout.classes {
        return Err(Error::LengthMismatch { left: target_map.len(), right: layout.classes });
    }
    if pool_size == 0 {
        return Err(Error::EmptyInput("pool_size"));
    }
    let mut scored: Vec<(f64, usize)> = Vec::new();
    for i in 0..candidates.len() {
        let (pred, conf) = model::predict_with_confidence(layout, params, candidates.row(i));
        if pred == candidates.labels[i] {
            scored.push((conf, i));
        }
    }
    if scored.is_empty() {
        return Err(Error::EmptyEdgePool);
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut pool = Batch::new(candidates.width);
    for &(_, i) in scored.iter().take(pool_size) {
        pool.push(candidates.row(i), target_map[candidates.labels[i]]);
    }
    Ok(pool)
}

/// round(pdr * n) distinct indices, chosen by seeded partial shuffle.
fn poison_indices(n: usize, pdr: f64, rng: &mut impl Rng) -> Vec<usize> {
    let count = ((pdr * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.gen_range(i..n);
        order.swap(i, j);
    }
    order.truncate(count);
    order
}
