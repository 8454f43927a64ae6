//! Dataset generation, IDX file loading, and the per-client partitioner.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::model::Batch;
use crate::{Error, Result};

/// One client's local data: a training split and a held-out eval split.
#[derive(Clone, Debug)]
pub struct ClientData {
    pub train: Batch,
    pub eval: Batch,
}

/// Per-class mean for the synthetic mixture: classes sit on unit axes, with
/// reused axes pushed one unit further out, so any two means are at least
/// unit distance apart.
pub fn synthetic_mean(class: usize, features: usize) -> Vec<f64> {
    let mut mean = vec![0.0; features];
    mean[class % features] = 1.0 + (class / features) as f64;
    mean
}

/// Gaussian blobs: `per_class` samples around each class mean with
/// per-coordinate deviation `spread`. Deterministic per seed.
pub fn gen_synthetic(
    classes: usize,
    features: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Batch> {
    if classes < 2 || features < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes and 2 features, got {classes}x{features}"
        )));
    }
    if per_class == 0 {
        return Err(Error::EmptyInput("per_class"));
    }
    if !(spread >= 0.0) {
        return Err(Error::InvalidArgument(format!("spread must be >= 0, got {spread}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut batch = Batch::new(features);
    let mut row = vec![0.0; features];
    for class in 0..classes {
        let mean = synthetic_mean(class, features);
        for _ in 0..per_class {
            for (r, m) in row.iter_mut().zip(&mean) {
                let noise: f64 = rng.sample(StandardNormal);
                *r = m + spread * noise;
            }
            batch.push(&row, class);
        }
    }
    Ok(batch)
}

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::IdxFormat(format!("truncated reading {what}")));
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

/// Loads an IDX image/label file pair; pixels are scaled to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Batch> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;

    let magic = read_be_u32(&images, 0, "image magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::IdxFormat(format!("bad image magic 0x{magic:08x}")));
    }
    let count = read_be_u32(&images, 4, "image count")? as usize;
    let rows = read_be_u32(&images, 8, "image rows")? as usize;
    let cols = read_be_u32(&images, 12, "image cols")? as usize;
    let pixels = count * rows * cols;
    if images.len() != 16 + pixels {
        return Err(Error::IdxFormat(format!(
            "image payload is {} bytes, expected {}",
            images.len() - 16.min(images.len()),
            pixels
        )));
    }

    let lmagic = read_be_u32(&labels, 0, "label magic")?;
    if lmagic != IDX_LABEL_MAGIC {
        return Err(Error::IdxFormat(format!("bad label magic 0x{lmagic:08x}")));
    }
    let lcount = read_be_u32(&labels, 4, "label count")? as usize;
    if labels.len() != 8 + lcount {
        return Err(Error::IdxFormat("label payload size mismatch".into()));
    }
    if lcount != count {
        return Err(Error::IdxFormat(format!("{count} images but {lcount} labels")));
    }

    let width = rows * cols;
    let mut batch = Batch::new(width);
    batch.features.reserve(pixels);
    for i in 0..count {
        let start = 16 + i * width;
        batch
            .features
            .extend(images[start..start + width].iter().map(|&p| p as f64 / 255.0));
        batch.labels.push(labels[8 + i] as usize);
    }
    Ok(batch)
}

/// Index-level partition used internally and by tests: which samples land
/// on which client, training indices first, eval indices second.
pub fn partition_indices(
    batch: &Batch,
    classes: usize,
    n_clients: usize,
    deg_niid: f64,
    eval_fraction: f64,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if n_clients == 0 {
        return Err(Error::EmptyInput("n_clients"));
    }
    if !(deg_niid > 0.0 && deg_niid <= 1.0) {
        return Err(Error::InvalidArgument(format!("deg_niid must be in (0,1], got {deg_niid}")));
    }
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eval_fraction must be in (0,1), got {eval_fraction}"
        )));
    }
    if let Some(&label) = batch.labels.iter().find(|&&y| y >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }

    // clients join groups round-robin, one group per class
    let mut group_members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for client in 0..n_clients {
        group_members[client % classes].push(client);
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut allocation: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    for i in 0..batch.len() {
        let label = batch.labels[i];
        let group = if rng.gen::<f64>() < deg_niid {
            label
        } else {
            let g = rng.gen_range(0..classes - 1);
            if g >= label {
                g + 1
            } else {
                g
            }
        };
        let members = &group_members[group];
        let client = if members.is_empty() {
            rng.gen_range(0..n_clients)
        } else {
            members[rng.gen_range(0..members.len())]
        };
        allocation[client].push(i);
    }

    let mut out = Vec::with_capacity(n_clients);
    for (client, mut indices) in allocation.into_iter().enumerate() {
        if indices.len() < 2 {
            return Err(Error::TooFewSamples { client, samples: indices.len() });
        }
        // shuffle, then hold out the last eval_fraction as the eval split
        for i in (1..indices.len()).rev() {
            indices.swap(i, rng.gen_range(0..=i));
        }
        let count = indices.len();
        let eval_count =
            ((eval_fraction * count as f64).round() as usize).clamp(1, count - 1);
        let eval = indices.split_off(count - eval_count);
        out.push((indices, eval));
    }
    Ok(out)
}

/// Splits a dataset across clients with label-skewed group sampling:
/// a sample of class l lands in group l with probability `deg_niid`,
/// otherwise uniformly in one of the other groups. `deg_niid = 1/classes`
/// is the uniform mix; `deg_niid = 1` gives single-class clients.
pub fn partition_noniid(
    batch: &Batch,
    classes: usize,
    n_clients: usize,
    deg_niid: f64,
    eval_fraction: f64,
    seed: u64,
) -> Result<Vec<ClientData>> {
    let indices = partition_indices(batch, classes, n_clients, deg_niid, eval_fraction, seed)?;
    Ok(indices
        .into_iter()
        .map(|(train, eval)| ClientData {
            train: batch.select(&train),
            eval: batch.select(&eval),
        })
        .collect())
}
