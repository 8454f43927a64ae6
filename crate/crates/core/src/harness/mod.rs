//! Experiment driver: builds a scenario's world, runs its rounds
//! deterministically, and emits per-round metrics rows.
//!
//! One scenario is one unit of work: clients train (in parallel when the
//! `parallel` feature is on), adversaries rewrite their data or uploads,
//! the server filters and aggregates under the chosen arithmetic backend,
//! and every round appends one CSV row. The whole metrics stream is a pure
//! function of the scenario, seed included: every random stream is derived
//! from the master seed through a fixed tag path, so thread scheduling
//! cannot leak into the results.

pub mod config;

pub use config::{AttackSpec, DatasetKind, DatasetSpec, ModelSpec, Scenario};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::attacks::{self, AttackKind, TriggerSpec};
use crate::client::{self, ClientState, Upload};
use crate::data;
use crate::error::Error;
use crate::model::{self, Batch, ModelKind, ModelLayout};
use crate::mpc::backend::Backend;
use crate::mpc::RevealEntry;
use crate::par;
use crate::privacy::DpLedger;
use crate::server::{self, ClipperState, SharedUpload};
use crate::Result;

/// Exact header of the per-round metrics file.
pub const CSV_HEADER: &str = "round,ma_global,ma_personalized,ba,eps_rdp,eps_moments,clip_c,n_selected,n_kept,gamma_hat,filter_tpr,filter_fpr";

const TAG_DATA: u64 = 1;
const TAG_PART: u64 = 2;
const TAG_INIT: u64 = 3;
const TAG_POOL: u64 = 4;
const TAG_MPC: u64 = 5;
const TAG_SELECT: u64 = 6;
const TAG_TRAIN: u64 = 7;
const TAG_ATTACK: u64 = 8;
const TAG_NOISE: u64 = 9;
const TAG_CAND: u64 = 10;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a tag path into an independent stream seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    s
}

fn rng_for(master: u64, tags: &[u64]) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(master, tags))
}

/// Participants per round: ceil(q * n), guarded against the product
/// landing a hair above the intended integer.
pub fn subsample_count(n: usize, q: f64) -> usize {
    let raw = ((q * n as f64) - 1e-9).ceil() as usize;
    raw.clamp(1, n)
}

/// One emitted metrics row; field order matches [`CSV_HEADER`].
#[derive(Clone, Debug)]
pub struct RoundMetrics {
    pub round: u32,
    pub ma_global: f64,
    pub ma_personalized: f64,
    /// Backdoor accuracy, or -1 when the attack defines no backdoor metric.
    pub ba: f64,
    pub eps_rdp: f64,
    pub eps_moments: f64,
    /// Clipping bound the round aggregated under (before its own update).
    pub clip_c: f64,
    pub n_selected: usize,
    pub n_kept: usize,
    /// Unclipped fraction, or -1 on a round with no consensus.
    pub gamma_hat: f64,
    pub filter_tpr: f64,
    pub filter_fpr: f64,
}

impl RoundMetrics {
    /// Renders the row exactly as it appears in the CSV.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.round,
            self.ma_global,
            self.ma_personalized,
            self.ba,
            self.eps_rdp,
            self.eps_moments,
            self.clip_c,
            self.n_selected,
            self.n_kept,
            self.gamma_hat,
            self.filter_tpr,
            self.filter_fpr
        )
    }
}

/// Serializes rows under the fixed header.
pub fn metrics_csv(rows: &[RoundMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

/// Serializes the reveal audit log, mirroring its `round,label,length` form.
pub fn reveals_csv(entries: &[RevealEntry]) -> String {
    let mut out = String::from("round,label,length\n");
    for e in entries {
        out.push_str(&format!("{},{},{}\n", e.round, e.label, e.len));
    }
    out
}

/// Everything a finished run leaves behind.
#[derive(Debug)]
pub struct RunResult {
    pub rows: Vec<RoundMetrics>,
    /// Per-round revealed global updates, for cross-backend comparisons.
    pub broadcasts: Vec<Vec<f64>>,
    pub reveals: Vec<RevealEntry>,
    pub aborted_rounds: usize,
}

impl RunResult {
    /// True when more than half of the executed rounds found no consensus.
    pub fn collapsed(&self) -> bool {
        2 * self.aborted_rounds > self.rows.len()
    }
}

/// Filter quality against ground truth: the fraction of adversaries
/// rejected and the fraction of honest participants rejected. No
/// adversaries present counts as a perfect 1.0 true-positive rate; no
/// honest participants as 0.0 false positives.
pub fn filter_metrics(kept: &[usize], truth: &[bool]) -> (f64, f64) {
    let mut kept_mask = vec![false; truth.len()];
    for &i in kept {
        if i < truth.len() {
            kept_mask[i] = true;
        }
    }
    let mut adv = 0u32;
    let mut adv_rejected = 0u32;
    let mut honest = 0u32;
    let mut honest_rejected = 0u32;
    for (i, &is_adv) in truth.iter().enumerate() {
        if is_adv {
            adv += 1;
            if !kept_mask[i] {
                adv_rejected += 1;
            }
        } else {
            honest += 1;
            if !kept_mask[i] {
                honest_rejected += 1;
            }
        }
    }
    let tpr = if adv == 0 { 1.0 } else { f64::from(adv_rejected) / f64::from(adv) };
    let fpr = if honest == 0 { 0.0 } else { f64::from(honest_rejected) / f64::from(honest) };
    (tpr, fpr)
}

/// Immutable fixtures shared by every round of one run.
struct World {
    layout: ModelLayout,
    width: usize,
    init: Vec<f64>,
    is_adv: Vec<bool>,
    adv_pool: Vec<usize>,
    honest_pool: Vec<usize>,
    pooled_eval: Batch,
    trigger: Option<TriggerSpec>,
    ba_eval: Option<Batch>,
    target_map: Vec<usize>,
    /// Fixed edge-pool candidates on file-backed data (fresh draws otherwise).
    idx_candidates: Option<Batch>,
}

fn build_trigger(s: &Scenario, width: usize) -> Result<TriggerSpec> {
    match s.dataset.kind {
        DatasetKind::Synthetic => {
            TriggerSpec::flat_block(width, s.attack.trigger_side, s.attack.target)
        }
        DatasetKind::Idx => {
            let side = (width as f64).sqrt().round() as usize;
            if side * side != width {
                return Err(Error::Config(format!(
                    "dataset.images: the square trigger needs square images, got width {width}"
                )));
            }
            TriggerSpec::image_square(side, side, s.attack.trigger_side, s.attack.target)
        }
    }
}

fn edge_eval_set(pooled: &Batch, source: usize, target: usize) -> Result<Batch> {
    let mut out = Batch::new(pooled.width);
    for i in 0..pooled.len() {
        if pooled.labels[i] == source {
            out.push(pooled.row(i), target);
        }
    }
    if out.is_empty() {
        return Err(Error::Config(
            "attack.source: no evaluation samples of the source class".into(),
        ));
    }
    Ok(out)
}

fn build_world(s: &Scenario, clients_out: &mut Vec<ClientState>) -> Result<World> {
    let batch = match s.dataset.kind {
        DatasetKind::Synthetic => {
            let total = s.clients * s.dataset.samples_per_client;
            let per_class = ((total + s.dataset.classes - 1) / s.dataset.classes).max(1);
            data::gen_synthetic(
                s.dataset.classes,
                s.dataset.features,
                per_class,
                s.dataset.spread,
                derive_seed(s.seed, &[TAG_DATA]),
            )?
        }
        DatasetKind::Idx => {
            data::load_idx(Path::new(&s.dataset.images), Path::new(&s.dataset.labels))?
        }
    };
    let width = batch.width;
    let classes = s.dataset.classes;
    let layout = match s.model.kind {
        ModelKind::Logistic => ModelLayout::logistic(width, classes),
        ModelKind::Mlp => ModelLayout::mlp(width, classes, s.model.hidden),
    };
    let parts = data::partition_noniid(
        &batch,
        classes,
        s.clients,
        s.dataset.deg_niid,
        s.dataset.eval_fraction,
        derive_seed(s.seed, &[TAG_PART]),
    )?;
    let init = model::init_params(&layout, derive_seed(s.seed, &[TAG_INIT]));
    *clients_out = parts
        .into_iter()
        .map(|d| ClientState::new(layout, &init, s.lambda_init, d))
        .collect();

    let pool_n = (s.attack.pmr * s.clients as f64 + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..s.clients).collect();
    let mut pool_rng = rng_for(s.seed, &[TAG_POOL]);
    for i in (1..order.len()).rev() {
        order.swap(i, pool_rng.gen_range(0..=i));
    }
    let mut adv_pool = order[..pool_n].to_vec();
    adv_pool.sort_unstable();
    let mut honest_pool = order[pool_n..].to_vec();
    honest_pool.sort_unstable();
    let mut is_adv = vec![false; s.clients];
    for &i in &adv_pool {
        is_adv[i] = true;
    }

    let mut pooled_eval = Batch::new(width);
    for c in clients_out.iter() {
        for i in 0..c.data.eval.len() {
            pooled_eval.push(c.data.eval.row(i), c.data.eval.labels[i]);
        }
    }

    let trigger = match s.attack.kind {
        AttackKind::A5 => Some(build_trigger(s, width)?),
        _ => None,
    };
    let ba_eval = match s.attack.kind {
        AttackKind::A5 => {
            let t = trigger.as_ref().expect("trigger exists for the backdoor attack");
            let set = attacks::backdoor_eval_set(&pooled_eval, t)?;
            if set.is_empty() {
                return Err(Error::Config(
                    "attack.target: no non-target evaluation samples to stamp".into(),
                ));
            }
            Some(set)
        }
        AttackKind::A6 => Some(edge_eval_set(&pooled_eval, s.attack.source, s.attack.target)?),
        _ => None,
    };
    let target_map: Vec<usize> = (0..classes)
        .map(|l| if s.attack.kind == AttackKind::A6 && l == s.attack.source { s.attack.target } else { l })
        .collect();
    let idx_candidates = if s.attack.kind == AttackKind::A6 && s.dataset.kind == DatasetKind::Idx {
        let mut cands = Batch::new(width);
        for i in 0..pooled_eval.len() {
            if pooled_eval.labels[i] == s.attack.source {
                cands.push(pooled_eval.row(i), s.attack.source);
            }
        }
        Some(cands)
    } else {
        None
    };

    Ok(World {
        layout,
        width,
        init,
        is_adv,
        adv_pool,
        honest_pool,
        pooled_eval,
        trigger,
        ba_eval,
        target_map,
        idx_candidates,
    })
}

/// Draws `k` distinct entries of `from` by partial shuffle.
fn pick(from: &[usize], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    debug_assert!(k <= from.len());
    let mut pool = from.to_vec();
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Edge-pool candidates for one round: low-margin source-class samples.
/// Synthetic data draws them around the midpoint of the source and target
/// means; file-backed data reuses the held-out source-class slice.
fn a6_candidates(s: &Scenario, world: &World, t: u32) -> Result<Batch> {
    if let Some(fixed) = &world.idx_candidates {
        return Ok(fixed.clone());
    }
    let src = data::synthetic_mean(s.attack.source, world.width);
    let tgt = data::synthetic_mean(s.attack.target, world.width);
    let mid: Vec<f64> = src.iter().zip(&tgt).map(|(a, b)| 0.5 * (a + b)).collect();
    let normal = Normal::new(0.0, s.dataset.spread)
        .map_err(|_| Error::Config(format!("dataset.spread: invalid deviation {}", s.dataset.spread)))?;
    let mut rng = rng_for(s.seed, &[TAG_CAND, u64::from(t)]);
    let count = s.attack.pool_size * 4;
    let mut out = Batch::new(world.width);
    let mut row = vec![0.0; world.width];
    for _ in 0..count {
        for (r, m) in row.iter_mut().zip(&mid) {
            *r = m + normal.sample(&mut rng);
        }
        out.push(&row, s.attack.source);
    }
    Ok(out)
}

/// Blends the shared pool into a client's round data so that a `rate`
/// fraction of the result comes from the pool, cycling the pool as needed.
fn mix_batches(own: &Batch, extra: &Batch, rate: f64) -> Batch {
    if rate >= 1.0 {
        return extra.clone();
    }
    let mut out = own.clone();
    if rate <= 0.0 || extra.is_empty() {
        return out;
    }
    let mass = (rate / (1.0 - rate) * own.len() as f64).round() as usize;
    for i in 0..mass {
        let j = i % extra.len();
        out.push(extra.row(j), extra.labels[j]);
    }
    out
}

/// Runs a validated scenario start to finish.
pub fn run_scenario(s: &Scenario) -> Result<RunResult> {
    s.validate()?;
    let mut clients: Vec<ClientState> = Vec::new();
    let world = build_world(s, &mut clients)?;
    let layout = world.layout;
    let classes = s.dataset.classes;
    let cfg = s.client;
    let total_params = layout.total_params();
    let seed = s.seed;
    let kind = s.attack.kind;
    let pdr = s.attack.pdr;

    let mut backend = Backend::new(s.backend, derive_seed(seed, &[TAG_MPC]));
    let mut clipper = ClipperState { c: s.clip_c0, gamma: s.clip_gamma, eta_c: s.clip_eta };
    let mut ledger = DpLedger::new();
    let mut mirror = world.init.clone();
    let mut pending = vec![0.0; total_params];
    let mut rows = Vec::with_capacity(s.rounds as usize);
    let mut broadcasts = Vec::with_capacity(s.rounds as usize);
    let mut aborted = 0usize;

    let n_sel = subsample_count(s.clients, s.subsample);
    // Floor keeps the adversary share at or below pmr, so a half-and-half
    // seat split cannot arise and an honest majority always exists.
    let quota =
        ((s.attack.pmr * n_sel as f64 + 1e-9).floor() as usize).min(world.adv_pool.len());

    for t in 1..=s.rounds {
        backend.set_round(t);
        let mut sel_rng = rng_for(seed, &[TAG_SELECT, u64::from(t)]);
        let mut selected = pick(&world.adv_pool, quota, &mut sel_rng);
        selected.extend(pick(&world.honest_pool, n_sel - quota, &mut sel_rng));
        selected.sort_unstable();
        let mut in_round = vec![false; s.clients];
        for &i in &selected {
            in_round[i] = true;
        }

        let past_warmup = kind != AttackKind::None && t > s.attack.warmup_rounds && quota > 0;
        // The shared edge pool is scored against the current global model,
        // which every colluder knows; an empty pool stands down this round.
        let a6_pool: Option<Batch> = if past_warmup && kind == AttackKind::A6 {
            let cands = a6_candidates(s, &world, t)?;
            match attacks::a6_edge_pool(&layout, &mirror, &cands, s.attack.pool_size, &world.target_map) {
                Ok(pool) => Some(pool),
                Err(Error::EmptyEdgePool) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let active = past_warmup && (kind != AttackKind::A6 || a6_pool.is_some());

        let pending_ref = &pending;
        let in_round_ref = &in_round;
        let is_adv_ref = &world.is_adv;
        let trigger_ref = &world.trigger;
        let a6_ref = &a6_pool;
        let produced: Vec<Result<Option<Upload>>> = par::map_mut(&mut clients, |i, st| {
            if !in_round_ref[i] {
                client::apply_broadcast(st, pending_ref);
                return Ok(None);
            }
            let mut train_rng = rng_for(seed, &[TAG_TRAIN, u64::from(t), i as u64]);
            let poisons_data = active
                && is_adv_ref[i]
                && matches!(kind, AttackKind::A4 | AttackKind::A5 | AttackKind::A6);
            let upload = if poisons_data {
                client::apply_broadcast(st, pending_ref);
                let mut atk_rng = rng_for(seed, &[TAG_ATTACK, u64::from(t), i as u64]);
                let train = match kind {
                    AttackKind::A4 => {
                        attacks::a4_label_flip(&st.data.train, classes, pdr, &mut atk_rng)
                    }
                    AttackKind::A5 => attacks::a5_backdoor(
                        &st.data.train,
                        trigger_ref.as_ref().expect("trigger exists for the backdoor attack"),
                        pdr,
                        &mut atk_rng,
                    )?,
                    _ => mix_batches(
                        &st.data.train,
                        a6_ref.as_ref().expect("edge pool exists while active"),
                        pdr,
                    ),
                };
                client::train_after_broadcast(st, &cfg, &mut train_rng, &train)?
            } else {
                client::train_round(st, pending_ref, &cfg, &mut train_rng)?
            };
            Ok(Some(upload))
        });
        let mut by_client: Vec<Option<Upload>> = produced.into_iter().collect::<Result<_>>()?;
        let mut uploads: Vec<Upload> = selected
            .iter()
            .map(|&i| by_client[i].take().expect("selected client produced an upload"))
            .collect();

        if active {
            let adv_pos: Vec<usize> = selected
                .iter()
                .enumerate()
                .filter(|&(_, &i)| world.is_adv[i])
                .map(|(j, _)| j)
                .collect();
            match kind {
                AttackKind::A1 => {
                    for &j in &adv_pos {
                        let mut atk_rng =
                            rng_for(seed, &[TAG_ATTACK, u64::from(t), selected[j] as u64]);
                        uploads[j] = attacks::a1_random_upload(&layout, &mut atk_rng);
                    }
                }
                AttackKind::A2 => {
                    let honest: Vec<Vec<f64>> =
                        adv_pos.iter().map(|&j| uploads[j].delta()).collect();
                    let crafted = attacks::a2_krum_attack(
                        &honest,
                        n_sel,
                        adv_pos.len(),
                        1e-3,
                        2e-2,
                        clipper.c,
                    )?;
                    let shared_upload = Upload::from_delta(&layout, &crafted);
                    for &j in &adv_pos {
                        uploads[j] = shared_upload.clone();
                    }
                }
                AttackKind::A3 => {
                    let honest: Vec<Vec<f64>> =
                        adv_pos.iter().map(|&j| uploads[j].delta()).collect();
                    for &j in &adv_pos {
                        let mut atk_rng =
                            rng_for(seed, &[TAG_ATTACK, u64::from(t), selected[j] as u64]);
                        let crafted = attacks::a3_trimmed_mean_attack(&honest, &mut atk_rng)?;
                        uploads[j] = Upload::from_delta(&layout, &crafted);
                    }
                }
                _ => {}
            }
        }

        let shared: Vec<SharedUpload> = uploads
            .iter()
            .map(|u| server::share_upload(&mut backend, u))
            .collect::<Result<_>>()?;
        let mut noise_rng = rng_for(seed, &[TAG_NOISE, u64::from(t)]);
        let outcome = server::aggregate_round(
            &mut backend,
            &shared,
            &mut clipper,
            &mut ledger,
            &s.dp,
            s.clients,
            s.defense_enabled,
            &mut noise_rng,
        )?;

        let truth: Vec<bool> = selected.iter().map(|&i| active && world.is_adv[i]).collect();
        let kept_slice: &[usize] = outcome.kept.as_deref().unwrap_or(&[]);
        let (tpr, fpr) = filter_metrics(kept_slice, &truth);
        if outcome.kept.is_none() {
            aborted += 1;
        }

        for (m, b) in mirror.iter_mut().zip(&outcome.broadcast) {
            *m += b;
        }
        let ma_global = model::evaluate(&layout, &mirror, &world.pooled_eval)?;
        let states = &clients;
        let accs: Vec<Result<f64>> = par::map_indexed(states.len(), |i| {
            model::evaluate(&layout, &states[i].w_local, &states[i].data.eval)
        });
        let mut ma_personalized = 0.0;
        for acc in accs {
            ma_personalized += acc?;
        }
        ma_personalized /= states.len() as f64;
        let ba = match &world.ba_eval {
            Some(set) => model::evaluate(&layout, &mirror, set)?,
            None => -1.0,
        };

        rows.push(RoundMetrics {
            round: t,
            ma_global,
            ma_personalized,
            ba,
            eps_rdp: ledger.rdp_epsilon(s.dp.delta),
            eps_moments: ledger.moments_epsilon(s.dp.delta),
            clip_c: outcome.clip_used,
            n_selected: n_sel,
            n_kept: kept_slice.len(),
            gamma_hat: outcome.gamma_hat.unwrap_or(-1.0),
            filter_tpr: tpr,
            filter_fpr: fpr,
        });
        broadcasts.push(outcome.broadcast.clone());
        pending = outcome.broadcast;
    }

    Ok(RunResult {
        rows,
        broadcasts,
        reveals: backend.log().entries().to_vec(),
        aborted_rounds: aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> Scenario {
        let mut s = Scenario::default();
        s.seed = seed;
        s.clients = 8;
        s.rounds = 3;
        s.subsample = 0.5;
        s.dataset.classes = 3;
        s.dataset.features = 6;
        s.dataset.samples_per_client = 12;
        s
    }

    #[test]
    fn zero_rounds_is_an_empty_stream() {
        let mut s = tiny(1);
        s.rounds = 0;
        let r = run_scenario(&s).unwrap();
        assert!(r.rows.is_empty());
        assert!(!r.collapsed());
        assert_eq!(metrics_csv(&r.rows), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn same_seed_means_identical_output() {
        let a = run_scenario(&tiny(9)).unwrap();
        let b = run_scenario(&tiny(9)).unwrap();
        assert_eq!(metrics_csv(&a.rows), metrics_csv(&b.rows));
        assert_eq!(reveals_csv(&a.reveals), reveals_csv(&b.reveals));
        assert_eq!(a.broadcasts, b.broadcasts);
    }

    #[test]
    fn different_seeds_diverge() {
        let a = run_scenario(&tiny(9)).unwrap();
        let b = run_scenario(&tiny(10)).unwrap();
        assert_ne!(metrics_csv(&a.rows), metrics_csv(&b.rows));
    }

    #[test]
    fn mlp_scenario_runs() {
        let mut s = tiny(4);
        s.model.kind = ModelKind::Mlp;
        s.model.hidden = 5;
        s.rounds = 2;
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows.iter().all(|row| row.ba == -1.0));
    }

    #[test]
    fn warmup_rounds_are_indistinguishable_from_no_attack() {
        let mut honest = tiny(17);
        honest.attack.pmr = 0.5;
        let mut flipped = honest.clone();
        flipped.attack.kind = AttackKind::A4;
        flipped.attack.pdr = 1.0;
        flipped.attack.warmup_rounds = flipped.rounds;
        let a = run_scenario(&honest).unwrap();
        let b = run_scenario(&flipped).unwrap();
        assert_eq!(metrics_csv(&a.rows), metrics_csv(&b.rows));
    }

    #[test]
    fn invalid_scenarios_are_rejected_up_front() {
        let mut s = tiny(1);
        s.subsample = 0.0;
        let err = run_scenario(&s).unwrap_err();
        assert!(err.to_string().contains("subsample"), "{err}");
    }

    #[test]
    fn ba_column_is_live_only_for_backdoor_attacks() {
        let mut s = tiny(3);
        s.attack.kind = AttackKind::A5;
        s.attack.pmr = 0.25;
        s.attack.trigger_side = 2;
        s.attack.target = 0;
        let r = run_scenario(&s).unwrap();
        assert!(r.rows.iter().all(|row| (0.0..=1.0).contains(&row.ba)));
    }

    #[test]
    fn flipped_minority_is_rejected_most_rounds() {
        // Three honest clients and one full label flipper under q = 1:
        // once directions settle the filter should reject the flipper in
        // the majority of rounds, on either backend.
        let mut s = Scenario::default();
        s.seed = 5;
        s.clients = 4;
        s.rounds = 12;
        s.subsample = 1.0;
        s.dataset.classes = 2;
        s.dataset.features = 6;
        s.dataset.samples_per_client = 30;
        s.dataset.deg_niid = 0.5;
        s.attack.kind = AttackKind::A4;
        s.attack.pmr = 0.25;
        s.attack.pdr = 1.0;
        let ideal = run_scenario(&s).unwrap();
        let mut shared = s.clone();
        shared.backend = crate::mpc::backend::BackendMode::Shared;
        let sh = run_scenario(&shared).unwrap();
        for (a, b) in ideal.rows.iter().zip(&sh.rows) {
            assert_eq!(a.filter_tpr, b.filter_tpr, "round {}", a.round);
        }
        let late: Vec<&RoundMetrics> = ideal.rows.iter().filter(|r| r.round >= 6).collect();
        let rejected = late.iter().filter(|r| r.filter_tpr == 1.0).count();
        assert!(
            2 * rejected > late.len(),
            "flipper rejected in {rejected} of {} late rounds",
            late.len()
        );
    }

    #[test]
    fn filter_metrics_counts() {
        assert_eq!(filter_metrics(&[], &[true, true]), (1.0, 0.0));
        assert_eq!(filter_metrics(&[0, 1, 2, 3], &[true, true, false, false]), (0.0, 0.0));
        assert_eq!(filter_metrics(&[1, 3], &[true, true, false, false]), (0.5, 0.5));
        assert_eq!(filter_metrics(&[0, 1], &[false, false]), (1.0, 0.0));
    }

    #[test]
    fn derived_seeds_split_cleanly() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
        assert_eq!(derive_seed(7, &[1, 2, 3]), derive_seed(7, &[1, 2, 3]));
    }

    #[test]
    fn subsample_count_guards_float_edges() {
        assert_eq!(subsample_count(100, 0.4), 40);
        assert_eq!(subsample_count(100, 1.0), 100);
        assert_eq!(subsample_count(3, 0.34), 2);
        assert_eq!(subsample_count(5, 0.01), 1);
    }

    #[test]
    fn csv_shape_matches_header() {
        let r = run_scenario(&tiny(2)).unwrap();
        let csv = metrics_csv(&r.rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let cols = CSV_HEADER.split(',').count();
        for line in lines {
            assert_eq!(line.split(',').count(), cols, "{line}");
        }
    }
}
