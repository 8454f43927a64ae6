//! Client-side training: a global SGD pass, a personalized model pulled
//! toward the global one by an adaptive coupling weight, and the
//! direction/amplitude upload decomposition.

use rand::Rng;

use crate::data::ClientData;
use crate::model::{self, Batch, ModelLayout};
use crate::Result;

/// Vectors shorter than this unitize to the zero vector.
pub const UNITIZE_FLOOR: f64 = 1e-12;

/// Hyperparameters for one client round.
#[derive(Clone, Copy, Debug)]
pub struct ClientConfig {
    pub eta_global: f64,
    pub eta_local: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub eta_ditto: f64,
    pub acc_thres: f64,
    /// Per-round cap on the eval subset used for the coupling update;
    /// 0 means the full eval split.
    pub eval_cap: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            eta_global: 0.01,
            eta_local: 0.01,
            epochs: 1,
            batch_size: 32,
            lambda_min: 0.0,
            lambda_max: 2.0,
            eta_ditto: 1.0,
            acc_thres: 0.05,
            eval_cap: 256,
        }
    }
}

/// What a client sends after a round: unit direction, amplitude, and the
/// unit direction of the last-layer slice.
#[derive(Clone, Debug)]
pub struct Upload {
    pub direction: Vec<f64>,
    pub amplitude: f64,
    pub last_direction: Vec<f64>,
}

impl Upload {
    /// Reassembles the full delta the direction/amplitude pair encodes.
    pub fn delta(&self) -> Vec<f64> {
        self.direction.iter().map(|d| d * self.amplitude).collect()
    }

    /// Decomposes a raw delta vector into an upload.
    pub fn from_delta(layout: &ModelLayout, delta: &[f64]) -> Self {
        let (direction, amplitude) = unitize(delta);
        let (last_direction, _) = unitize(model::slice_last_layer(layout, delta));
        Self { direction, amplitude, last_direction }
    }
}

/// One simulated client: its data, both models, and the coupling weight.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub layout: ModelLayout,
    pub w_global: Vec<f64>,
    pub w_local: Vec<f64>,
    pub lambda: f64,
    pub data: ClientData,
}

impl ClientState {
    pub fn new(layout: ModelLayout, init: &[f64], lambda_init: f64, data: ClientData) -> Self {
        Self {
            layout,
            w_global: init.to_vec(),
            w_local: init.to_vec(),
            lambda: lambda_init,
            data,
        }
    }
}

/// Scales a vector to unit norm, returning (direction, original norm).
/// Near-zero vectors map to (zeros, 0) so a silent client stays silent.
pub fn unitize(v: &[f64]) -> (Vec<f64>, f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < UNITIZE_FLOOR {
        (vec![0.0; v.len()], 0.0)
    } else {
        (v.iter().map(|x| x / norm).collect(), norm)
    }
}

/// One personalized-model step: gradient descent on the local loss plus the
/// coupling pull toward the global weights.
pub fn ditto_step(
    w_local: &mut [f64],
    w_global: &[f64],
    grad_local: &[f64],
    eta_local: f64,
    lambda: f64,
) {
    for ((wl, wg), g) in w_local.iter_mut().zip(w_global).zip(grad_local) {
        *wl -= eta_local * (g + lambda * (*wl - wg));
    }
}

/// Moves the coupling weight by the clamped accuracy gap rule.
pub fn update_lambda(lambda: f64, acc_ref: f64, acc_local: f64, cfg: &ClientConfig) -> f64 {
    (lambda + cfg.eta_ditto * (acc_ref - acc_local - cfg.acc_thres))
        .clamp(cfg.lambda_min, cfg.lambda_max)
}

/// Applies a server broadcast to the client's global model.
pub fn apply_broadcast(state: &mut ClientState, broadcast: &[f64]) {
    debug_assert_eq!(state.w_global.len(), broadcast.len());
    for (w, b) in state.w_global.iter_mut().zip(broadcast) {
        *w += b;
    }
}

/// Runs one full client round: applies the broadcast, trains on the
/// client's own data, and returns the decomposed update.
pub fn train_round(
    state: &mut ClientState,
    broadcast: &[f64],
    cfg: &ClientConfig,
    rng: &mut impl Rng,
) -> Result<Upload> {
    apply_broadcast(state, broadcast);
    let train = state.data.train.clone();
    train_after_broadcast(state, cfg, rng, &train)
}

/// Training body used after the broadcast is already applied; the batch may
/// differ from the client's stored data (poisoned copies, mixed-in pools).
pub fn train_after_broadcast(
    state: &mut ClientState,
    cfg: &ClientConfig,
    rng: &mut impl Rng,
    train: &Batch,
) -> Result<Upload> {
    let layout = state.layout;
    let w_temp = state.w_global.clone();
    let acc_ref = model::evaluate(&layout, &state.w_global, &state.data.eval)?;
    let eval_subset = capped_eval(&state.data.eval, cfg.eval_cap, rng);

    let batch_size = cfg.batch_size.max(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for chunk in order.chunks(batch_size) {
            let batch = train.select(chunk);
            let (_, g) = model::loss_and_grad(&layout, &state.w_global, &batch)?;
            for (w, gi) in state.w_global.iter_mut().zip(&g) {
                *w -= cfg.eta_global * gi;
            }
            let (_, gl) = model::loss_and_grad(&layout, &state.w_local, &batch)?;
            ditto_step(&mut state.w_local, &state.w_global, &gl, cfg.eta_local, state.lambda);
            let acc_local = model::evaluate(&layout, &state.w_local, &eval_subset)?;
            state.lambda = update_lambda(state.lambda, acc_ref, acc_local, cfg);
        }
    }

    let delta: Vec<f64> =
        state.w_global.iter().zip(&w_temp).map(|(w, t)| w - t).collect();
    Ok(Upload::from_delta(&layout, &delta))
}

/// Fixed per-round eval subset for the coupling update.
fn capped_eval(eval: &Batch, cap: usize, rng: &mut impl Rng) -> Batch {
    if cap == 0 || eval.len() <= cap {
        return eval.clone();
    }
    // seeded reservoir keeps the subset stable within the round
    let mut chosen: Vec<usize> = (0..cap).collect();
    for i in cap..eval.len() {
        let j = rng.gen_range(0..=i);
        if j < cap {
            chosen[j] = i;
        }
    }
    chosen.sort_unstable();
    eval.select(&chosen)
}
