//! Flat-parameter classifiers: multinomial logistic regression and a
//! one-hidden-layer tanh MLP.
//!
//! Parameters live in a single `Vec<f64>` so model deltas can be shared,
//! filtered, and aggregated as plain vectors. The last-layer slice (output
//! weights plus biases) is what the second filtering stage looks at.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ModelKind {
    Logistic,
    Mlp,
}

/// Shape of a model; fixes the flat parameter layout.
///
/// Logistic: class weights row-major, then class biases.
/// MLP: hidden weights, hidden biases, output weights, output biases.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ModelLayout {
    pub kind: ModelKind,
    pub features: usize,
    pub classes: usize,
    pub hidden: usize,
}

impl ModelLayout {
    pub fn logistic(features: usize, classes: usize) -> Self {
        Self { kind: ModelKind::Logistic, features, classes, hidden: 0 }
    }

    pub fn mlp(features: usize, classes: usize, hidden: usize) -> Self {
        Self { kind: ModelKind::Mlp, features, classes, hidden }
    }

    pub fn total_params(&self) -> usize {
        match self.kind {
            ModelKind::Logistic => self.classes * (self.features + 1),
            ModelKind::Mlp => {
                self.hidden * (self.features + 1) + self.classes * (self.hidden + 1)
            }
        }
    }

    /// Start of the last layer (output weights and biases) in the flat
    /// vector. For logistic regression the whole vector is the last layer.
    pub fn last_layer_start(&self) -> usize {
        match self.kind {
            ModelKind::Logistic => 0,
            ModelKind::Mlp => self.hidden * (self.features + 1),
        }
    }
}

/// Returns the last-layer portion of a flat parameter or delta vector.
pub fn slice_last_layer<'a>(layout: &ModelLayout, params: &'a [f64]) -> &'a [f64] {
    &params[layout.last_layer_start()..]
}

/// A set of samples: row-major features plus integer labels.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub width: usize,
}

impl Batch {
    pub fn new(width: usize) -> Self {
        Self { features: Vec::new(), labels: Vec::new(), width }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn push(&mut self, row: &[f64], label: usize) {
        debug_assert_eq!(row.len(), self.width);
        self.features.extend_from_slice(row);
        self.labels.push(label);
    }

    /// Copies the given sample indices into a new batch.
    pub fn select(&self, indices: &[usize]) -> Batch {
        let mut out = Batch::new(self.width);
        for &i in indices {
            out.push(self.row(i), self.labels[i]);
        }
        out
    }
}

/// Initial parameters shared by every participant: zeros for logistic
/// regression, seeded uniform Xavier fan-scaling for the MLP (an all-zero
/// MLP would only ever learn its output biases).
pub fn init_params(layout: &ModelLayout, seed: u64) -> Vec<f64> {
    let mut params = vec![0.0; layout.total_params()];
    if layout.kind == ModelKind::Mlp {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (d, h, l) = (layout.features, layout.hidden, layout.classes);
        let w1 = (6.0 / (d + h) as f64).sqrt();
        for p in params.iter_mut().take(h * d) {
            *p = rng.gen_range(-w1..w1);
        }
        let w2 = (6.0 / (h + l) as f64).sqrt();
        let start = h * (d + 1);
        for p in params.iter_mut().skip(start).take(l * h) {
            *p = rng.gen_range(-w2..w2);
        }
    }
    params
}

fn check_shapes(layout: &ModelLayout, params: &[f64], batch: &Batch) -> Result<()> {
    if params.len() != layout.total_params() {
        return Err(Error::LengthMismatch { left: params.len(), right: layout.total_params() });
    }
    if batch.width != layout.features {
        return Err(Error::LengthMismatch { left: batch.width, right: layout.features });
    }
    if let Some(&label) = batch.labels.iter().find(|&&y| y >= layout.classes) {
        return Err(Error::LabelOutOfRange { label, classes: layout.classes });
    }
    Ok(())
}

/// Class scores for one sample; for the MLP also returns the hidden
/// activations needed by the backward pass.
fn forward(layout: &ModelLayout, params: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (d, l) = (layout.features, layout.classes);
    match layout.kind {
        ModelKind::Logistic => {
            let mut z = vec![0.0; l];
            for (c, zc) in z.iter_mut().enumerate() {
                let row = &params[c * d..(c + 1) * d];
                let mut acc = params[l * d + c];
                for (w, xi) in row.iter().zip(x) {
                    acc += w * xi;
                }
                *zc = acc;
            }
            (z, Vec::new())
        }
        ModelKind::Mlp => {
            let h = layout.hidden;
            let mut hidden = vec![0.0; h];
            for (k, hk) in hidden.iter_mut().enumerate() {
                let row = &params[k * d..(k + 1) * d];
                let mut acc = params[h * d + k];
                for (w, xi) in row.iter().zip(x) {
                    acc += w * xi;
                }
                *hk = acc.tanh();
            }
            let out = h * (d + 1);
            let mut z = vec![0.0; l];
            for (c, zc) in z.iter_mut().enumerate() {
                let row = &params[out + c * h..out + (c + 1) * h];
                let mut acc = params[out + l * h + c];
                for (w, hk) in row.iter().zip(&hidden) {
                    acc += w * hk;
                }
                *zc = acc;
            }
            (z, hidden)
        }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Mean cross-entropy over the batch and its exact gradient.
pub fn loss_and_grad(
    layout: &ModelLayout,
    params: &[f64],
    batch: &Batch,
) -> Result<(f64, Vec<f64>)> {
    check_shapes(layout, params, batch)?;
    if batch.is_empty() {
        return Err(Error::EmptyInput("loss_and_grad batch"));
    }
    let (d, l) = (layout.features, layout.classes);
    let n = batch.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for i in 0..batch.len() {
        let x = batch.row(i);
        let y = batch.labels[i];
        let (mut z, hidden) = forward(layout, params, x);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += (lse - z[y]) / n;
        softmax_in_place(&mut z);
        // dz holds d(loss)/d(logit), already averaged over the batch
        let mut dz = z;
        dz[y] -= 1.0;
        for v in dz.iter_mut() {
            *v /= n;
        }
        match layout.kind {
            ModelKind::Logistic => {
                for (c, &dzc) in dz.iter().enumerate() {
                    let wrow = &mut grad[c * d..(c + 1) * d];
                    for (g, xi) in wrow.iter_mut().zip(x) {
                        *g += dzc * xi;
                    }
                    grad[l * d + c] += dzc;
                }
            }
            ModelKind::Mlp => {
                let h = layout.hidden;
                let out = h * (d + 1);
                let mut dh = vec![0.0; h];
                for (c, &dzc) in dz.iter().enumerate() {
                    let wrow = &params[out + c * h..out + (c + 1) * h];
                    let grow = &mut grad[out + c * h..out + (c + 1) * h];
                    for k in 0..h {
                        grow[k] += dzc * hidden[k];
                        dh[k] += dzc * wrow[k];
                    }
                    grad[out + l * h + c] += dzc;
                }
                for k in 0..h {
                    let da = dh[k] * (1.0 - hidden[k] * hidden[k]);
                    let grow = &mut grad[k * d..(k + 1) * d];
                    for (g, xi) in grow.iter_mut().zip(x) {
                        *g += da * xi;
                    }
                    grad[h * d + k] += da;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Predicted class: argmax over scores, ties toward the lowest index.
pub fn predict(layout: &ModelLayout, params: &[f64], x: &[f64]) -> usize {
    let (z, _) = forward(layout, params, x);
    let mut best = 0;
    for (c, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = c;
        }
    }
    best
}

/// Predicted class and its softmax probability.
pub fn predict_with_confidence(layout: &ModelLayout, params: &[f64], x: &[f64]) -> (usize, f64) {
    let (mut z, _) = forward(layout, params, x);
    let mut best = 0;
    for (c, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = c;
        }
    }
    softmax_in_place(&mut z);
    (best, z[best])
}

/// Fraction of the batch classified correctly.
pub fn evaluate(layout: &ModelLayout, params: &[f64], batch: &Batch) -> Result<f64> {
    check_shapes(layout, params, batch)?;
    if batch.is_empty() {
        return Err(Error::EmptyInput("evaluate batch"));
    }
    let correct = (0..batch.len())
        .filter(|&i| predict(layout, params, batch.row(i)) == batch.labels[i])
        .count();
    Ok(correct as f64 / batch.len() as f64)
}
