//! Scenario files: flat `key = value` lines with `#` comment lines.
//!
//! Every key has a default, so an empty file describes the stock
//! desk-scale setup. Unknown keys are rejected so typos fail loudly, and
//! every validation message names the offending key.

use std::path::Path;

use crate::attacks::AttackKind;
use crate::client::ClientConfig;
use crate::error::Error;
use crate::model::ModelKind;
use crate::mpc::backend::BackendMode;
use crate::privacy::DpConfig;
use crate::Result;

/// Where the sample pool comes from.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DatasetKind {
    Synthetic,
    Idx,
}

/// Sample pool settings: synthetic Gaussian blobs or an IDX image/label pair.
#[derive(Clone, Debug)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub classes: usize,
    /// Feature width of the synthetic pool; IDX pools take theirs from the file.
    pub features: usize,
    pub samples_per_client: usize,
    /// Per-coordinate standard deviation of the synthetic blobs.
    pub spread: f64,
    pub images: String,
    pub labels: String,
    /// Probability that a sample of class l lands in client group l.
    pub deg_niid: f64,
    pub eval_fraction: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Synthetic,
            classes: 10,
            features: 32,
            samples_per_client: 60,
            spread: 0.3,
            images: String::new(),
            labels: String::new(),
            deg_niid: 0.1,
            eval_fraction: 0.2,
        }
    }
}

/// Model family plus the hidden width used by the MLP.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { kind: ModelKind::Mlp, hidden: 16 }
    }
}

/// Adversary population and behavior knobs.
#[derive(Clone, Debug)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Fraction of poisoned models per round (and of the client population).
    pub pmr: f64,
    /// Fraction of poisoned samples within an adversary's round data.
    pub pdr: f64,
    /// Rounds during which adversaries behave honestly.
    pub warmup_rounds: u32,
    pub target: usize,
    pub source: usize,
    pub trigger_side: usize,
    pub pool_size: usize,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            pmr: 0.0,
            pdr: 0.5,
            warmup_rounds: 0,
            target: 0,
            source: 7,
            trigger_side: 5,
            pool_size: 16,
        }
    }
}

/// A full experiment description: the unit the CLI runs, validates and sweeps.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub seed: u64,
    pub backend: BackendMode,
    pub defense_enabled: bool,
    /// Total number of clients (N).
    pub clients: usize,
    /// Number of federated rounds (T).
    pub rounds: u32,
    /// Per-round sampling fraction (q).
    pub subsample: f64,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub client: ClientConfig,
    pub lambda_init: f64,
    pub clip_c0: f64,
    pub clip_gamma: f64,
    pub clip_eta: f64,
    pub dp: DpConfig,
    pub attack: AttackSpec,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 42,
            backend: BackendMode::Ideal,
            defense_enabled: true,
            clients: 100,
            rounds: 50,
            subsample: 0.4,
            dataset: DatasetSpec::default(),
            model: ModelSpec::default(),
            // Desk-scale pacing: smaller batches and a faster rate keep the
            // model visibly learning across all fifty default rounds.
            client: ClientConfig {
                eta_global: 0.035,
                eta_local: 0.035,
                batch_size: 8,
                ..ClientConfig::default()
            },
            lambda_init: 0.0,
            clip_c0: 10.0,
            clip_gamma: 0.5,
            clip_eta: 0.3,
            dp: DpConfig { sigma: 0.0, delta: 1e-3 },
            attack: AttackSpec::default(),
        }
    }
}

fn bad(key: &str, want: &str, got: &str) -> Error {
    Error::Config(format!("{key}: expected {want}, got `{got}`"))
}

fn p_f64(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| bad(key, "a number", v))
}

fn p_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| bad(key, "a nonnegative integer", v))
}

fn p_u64(key: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| bad(key, "a nonnegative integer", v))
}

fn p_u32(key: &str, v: &str) -> Result<u32> {
    v.parse().map_err(|_| bad(key, "a nonnegative integer", v))
}

fn p_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, "true or false", v)),
    }
}

fn backend_name(b: BackendMode) -> &'static str {
    match b {
        BackendMode::Ideal => "ideal",
        BackendMode::Shared => "shared",
    }
}

fn dataset_name(k: DatasetKind) -> &'static str {
    match k {
        DatasetKind::Synthetic => "synthetic",
        DatasetKind::Idx => "idx",
    }
}

fn model_name(k: ModelKind) -> &'static str {
    match k {
        ModelKind::Logistic => "logistic",
        ModelKind::Mlp => "mlp",
    }
}

fn attack_name(k: AttackKind) -> &'static str {
    match k {
        AttackKind::None => "none",
        AttackKind::A1 => "a1",
        AttackKind::A2 => "a2",
        AttackKind::A3 => "a3",
        AttackKind::A4 => "a4",
        AttackKind::A5 => "a5",
        AttackKind::A6 => "a6",
    }
}

impl Scenario {
    /// Parses a whole config text; later assignments override earlier ones.
    /// Everything from a `#` to the end of its line is a comment.
    pub fn parse(text: &str) -> Result<Scenario> {
        let mut s = Scenario::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    idx + 1
                )));
            };
            s.set_key(key.trim(), value.trim())?;
        }
        Ok(s)
    }

    /// Reads and parses a config file.
    pub fn from_file(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Scenario::parse(&text)
    }

    /// Assigns one key; the same path a sweep uses to vary a setting.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = p_u64(key, value)?,
            "backend" => {
                self.backend = value
                    .to_ascii_lowercase()
                    .parse()
                    .map_err(|_| bad(key, "ideal or shared", value))?;
            }
            "defense.enabled" => self.defense_enabled = p_bool(key, value)?,
            "clients" => self.clients = p_usize(key, value)?,
            "rounds" => self.rounds = p_u32(key, value)?,
            "subsample" => self.subsample = p_f64(key, value)?,
            "dataset.kind" => {
                self.dataset.kind = match value.to_ascii_lowercase().as_str() {
                    "synthetic" => DatasetKind::Synthetic,
                    "idx" => DatasetKind::Idx,
                    _ => return Err(bad(key, "synthetic or idx", value)),
                }
            }
            "dataset.classes" => self.dataset.classes = p_usize(key, value)?,
            "dataset.features" => self.dataset.features = p_usize(key, value)?,
            "dataset.samples_per_client" => {
                self.dataset.samples_per_client = p_usize(key, value)?
            }
            "dataset.spread" => self.dataset.spread = p_f64(key, value)?,
            "dataset.images" => self.dataset.images = value.to_string(),
            "dataset.labels" => self.dataset.labels = value.to_string(),
            "dataset.deg_niid" => self.dataset.deg_niid = p_f64(key, value)?,
            "dataset.eval_fraction" => self.dataset.eval_fraction = p_f64(key, value)?,
            "model.kind" => {
                self.model.kind = match value.to_ascii_lowercase().as_str() {
                    "logistic" => ModelKind::Logistic,
                    "mlp" => ModelKind::Mlp,
                    _ => return Err(bad(key, "logistic or mlp", value)),
                }
            }
            "model.hidden" => self.model.hidden = p_usize(key, value)?,
            "client.eta_global" => self.client.eta_global = p_f64(key, value)?,
            "client.eta_local" => self.client.eta_local = p_f64(key, value)?,
            "client.epochs" => self.client.epochs = p_usize(key, value)?,
            "client.batch_size" => self.client.batch_size = p_usize(key, value)?,
            "client.lambda_init" => self.lambda_init = p_f64(key, value)?,
            "client.lambda_min" => self.client.lambda_min = p_f64(key, value)?,
            "client.lambda_max" => self.client.lambda_max = p_f64(key, value)?,
            "client.eta_ditto" => self.client.eta_ditto = p_f64(key, value)?,
            "client.acc_thres" => self.client.acc_thres = p_f64(key, value)?,
            "client.eval_cap" => self.client.eval_cap = p_usize(key, value)?,
            "clip.c0" => self.clip_c0 = p_f64(key, value)?,
            "clip.gamma" => self.clip_gamma = p_f64(key, value)?,
            "clip.eta_c" => self.clip_eta = p_f64(key, value)?,
            "dp.sigma" => self.dp.sigma = p_f64(key, value)?,
            "dp.delta" => self.dp.delta = p_f64(key, value)?,
            "attack.kind" => {
                self.attack.kind = value
                    .to_ascii_lowercase()
                    .parse()
                    .map_err(|_| bad(key, "none or a1..a6", value))?;
            }
            "attack.pmr" => self.attack.pmr = p_f64(key, value)?,
            "attack.pdr" => self.attack.pdr = p_f64(key, value)?,
            "attack.warmup_rounds" => self.attack.warmup_rounds = p_u32(key, value)?,
            "attack.target" => self.attack.target = p_usize(key, value)?,
            "attack.source" => self.attack.source = p_usize(key, value)?,
            "attack.trigger_side" => self.attack.trigger_side = p_usize(key, value)?,
            "attack.pool_size" => self.attack.pool_size = p_usize(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Renders the scenario as a config file; parsing it back round-trips.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("seed", self.seed.to_string());
        kv("backend", backend_name(self.backend).to_string());
        kv("defense.enabled", self.defense_enabled.to_string());
        kv("clients", self.clients.to_string());
        kv("rounds", self.rounds.to_string());
        kv("subsample", self.subsample.to_string());
        kv("dataset.kind", dataset_name(self.dataset.kind).to_string());
        kv("dataset.classes", self.dataset.classes.to_string());
        kv("dataset.features", self.dataset.features.to_string());
        kv(
            "dataset.samples_per_client",
            self.dataset.samples_per_client.to_string(),
        );
        kv("dataset.spread", self.dataset.spread.to_string());
        kv("dataset.images", self.dataset.images.clone());
        kv("dataset.labels", self.dataset.labels.clone());
        kv("dataset.deg_niid", self.dataset.deg_niid.to_string());
        kv("dataset.eval_fraction", self.dataset.eval_fraction.to_string());
        kv("model.kind", model_name(self.model.kind).to_string());
        kv("model.hidden", self.model.hidden.to_string());
        kv("client.eta_global", self.client.eta_global.to_string());
        kv("client.eta_local", self.client.eta_local.to_string());
        kv("client.epochs", self.client.epochs.to_string());
        kv("client.batch_size", self.client.batch_size.to_string());
        kv("client.lambda_init", self.lambda_init.to_string());
        kv("client.lambda_min", self.client.lambda_min.to_string());
        kv("client.lambda_max", self.client.lambda_max.to_string());
        kv("client.eta_ditto", self.client.eta_ditto.to_string());
        kv("client.acc_thres", self.client.acc_thres.to_string());
        kv("client.eval_cap", self.client.eval_cap.to_string());
        kv("clip.c0", self.clip_c0.to_string());
        kv("clip.gamma", self.clip_gamma.to_string());
        kv("clip.eta_c", self.clip_eta.to_string());
        kv("dp.sigma", self.dp.sigma.to_string());
        kv("dp.delta", self.dp.delta.to_string());
        kv("attack.kind", attack_name(self.attack.kind).to_string());
        kv("attack.pmr", self.attack.pmr.to_string());
        kv("attack.pdr", self.attack.pdr.to_string());
        kv("attack.warmup_rounds", self.attack.warmup_rounds.to_string());
        kv("attack.target", self.attack.target.to_string());
        kv("attack.source", self.attack.source.to_string());
        kv("attack.trigger_side", self.attack.trigger_side.to_string());
        kv("attack.pool_size", self.attack.pool_size.to_string());
        out
    }

    /// Checks every cross-field invariant, naming the field in each message.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.clients < 2 {
            return fail(format!("clients: need at least 2, got {}", self.clients));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return fail(format!("subsample: must lie in (0, 1], got {}", self.subsample));
        }
        let n_sel = super::subsample_count(self.clients, self.subsample);
        if n_sel < 2 {
            return fail(format!(
                "subsample: rounds need at least two participants, got {n_sel}"
            ));
        }
        if self.attack.warmup_rounds > self.rounds {
            return fail(format!(
                "attack.warmup_rounds: exceeds rounds ({} > {})",
                self.attack.warmup_rounds, self.rounds
            ));
        }
        match self.dataset.kind {
            DatasetKind::Synthetic => {
                if self.dataset.classes < 2 {
                    return fail(format!(
                        "dataset.classes: need at least 2, got {}",
                        self.dataset.classes
                    ));
                }
                if self.dataset.features < 2 {
                    return fail(format!(
                        "dataset.features: need at least 2, got {}",
                        self.dataset.features
                    ));
                }
                if self.dataset.samples_per_client < 2 {
                    return fail(format!(
                        "dataset.samples_per_client: need at least 2, got {}",
                        self.dataset.samples_per_client
                    ));
                }
                if !(self.dataset.spread >= 0.0) {
                    return fail(format!(
                        "dataset.spread: must be nonnegative, got {}",
                        self.dataset.spread
                    ));
                }
            }
            DatasetKind::Idx => {
                if self.dataset.images.is_empty() {
                    return fail("dataset.images: required for dataset.kind = idx".into());
                }
                if self.dataset.labels.is_empty() {
                    return fail("dataset.labels: required for dataset.kind = idx".into());
                }
                if self.dataset.classes < 2 {
                    return fail(format!(
                        "dataset.classes: need at least 2, got {}",
                        self.dataset.classes
                    ));
                }
            }
        }
        if !(self.dataset.deg_niid > 0.0 && self.dataset.deg_niid <= 1.0) {
            return fail(format!(
                "dataset.deg_niid: must lie in (0, 1], got {}",
                self.dataset.deg_niid
            ));
        }
        if !(self.dataset.eval_fraction > 0.0 && self.dataset.eval_fraction < 1.0) {
            return fail(format!(
                "dataset.eval_fraction: must lie in (0, 1), got {}",
                self.dataset.eval_fraction
            ));
        }
        if self.model.kind == ModelKind::Mlp && self.model.hidden == 0 {
            return fail("model.hidden: the mlp needs at least one hidden unit".into());
        }
        if !(self.client.eta_global > 0.0) {
            return fail(format!(
                "client.eta_global: must be positive, got {}",
                self.client.eta_global
            ));
        }
        if !(self.client.eta_local > 0.0) {
            return fail(format!(
                "client.eta_local: must be positive, got {}",
                self.client.eta_local
            ));
        }
        if self.client.epochs == 0 {
            return fail("client.epochs: need at least 1".into());
        }
        if self.client.batch_size == 0 {
            return fail("client.batch_size: need at least 1".into());
        }
        if self.client.eval_cap == 0 {
            return fail("client.eval_cap: need at least 1".into());
        }
        if !(self.client.eta_ditto >= 0.0) {
            return fail(format!(
                "client.eta_ditto: must be nonnegative, got {}",
                self.client.eta_ditto
            ));
        }
        if !(self.client.acc_thres >= 0.0) {
            return fail(format!(
                "client.acc_thres: must be nonnegative, got {}",
                self.client.acc_thres
            ));
        }
        if !(self.client.lambda_min <= self.lambda_init
            && self.lambda_init <= self.client.lambda_max)
        {
            return fail(format!(
                "client.lambda_init: {} outside [{}, {}]",
                self.lambda_init, self.client.lambda_min, self.client.lambda_max
            ));
        }
        if !(self.clip_c0 > 0.0) {
            return fail(format!("clip.c0: must be positive, got {}", self.clip_c0));
        }
        if !(self.clip_gamma >= 0.0 && self.clip_gamma <= 1.0) {
            return fail(format!(
                "clip.gamma: must lie in [0, 1], got {}",
                self.clip_gamma
            ));
        }
        if !(self.clip_eta >= 0.0) {
            return fail(format!("clip.eta_c: must be nonnegative, got {}", self.clip_eta));
        }
        if !(self.dp.sigma >= 0.0) {
            return fail(format!("dp.sigma: must be nonnegative, got {}", self.dp.sigma));
        }
        if !(self.dp.delta > 0.0 && self.dp.delta < 1.0) {
            return fail(format!("dp.delta: must lie in (0, 1), got {}", self.dp.delta));
        }
        if !(self.attack.pmr >= 0.0 && self.attack.pmr <= 1.0) {
            return fail(format!("attack.pmr: must lie in [0, 1], got {}", self.attack.pmr));
        }
        if !(self.attack.pdr >= 0.0 && self.attack.pdr <= 1.0) {
            return fail(format!("attack.pdr: must lie in [0, 1], got {}", self.attack.pdr));
        }
        let pool = (self.attack.pmr * self.clients as f64 + 1e-9).floor() as usize;
        let quota = ((self.attack.pmr * n_sel as f64 + 1e-9).floor() as usize).min(pool);
        if n_sel - quota > self.clients - pool {
            return fail(format!(
                "attack.pmr: {n_sel} participants cannot seat {} honest clients when only {} of {} clients are honest",
                n_sel - quota,
                self.clients - pool,
                self.clients
            ));
        }
        match self.attack.kind {
            AttackKind::A3 => {
                if quota < 2 {
                    return fail(format!(
                        "attack.pmr: the deviation attack needs at least two colluders per round, got {quota}"
                    ));
                }
            }
            AttackKind::A5 => {
                if self.attack.trigger_side == 0 {
                    return fail("attack.trigger_side: need at least 1".into());
                }
                if self.attack.target >= self.dataset.classes {
                    return fail(format!(
                        "attack.target: class {} out of range for {} classes",
                        self.attack.target, self.dataset.classes
                    ));
                }
                if self.dataset.kind == DatasetKind::Synthetic {
                    let need = self.attack.trigger_side * self.attack.trigger_side;
                    if need > self.dataset.features {
                        return fail(format!(
                            "attack.trigger_side: a flat trigger of {need} values does not fit {} features",
                            self.dataset.features
                        ));
                    }
                }
            }
            AttackKind::A6 => {
                if self.attack.pool_size == 0 {
                    return fail("attack.pool_size: need at least 1".into());
                }
                if self.attack.target >= self.dataset.classes {
                    return fail(format!(
                        "attack.target: class {} out of range for {} classes",
                        self.attack.target, self.dataset.classes
                    ));
                }
                if self.attack.source >= self.dataset.classes {
                    return fail(format!(
                        "attack.source: class {} out of range for {} classes",
                        self.attack.source, self.dataset.classes
                    ));
                }
                if self.attack.source == self.attack.target {
                    return fail(format!(
                        "attack.source: must differ from attack.target ({})",
                        self.attack.target
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}
