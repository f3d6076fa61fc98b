//! Training loops for the energy model and the supervised baselines.
//!
//! Every epoch shuffles the training triples with a generator derived from
//! the run seed and the epoch index, so epoch `k` sees the same batches no
//! matter how training was resumed. Sampler and negative draws come from
//! their own named streams held by [`Trainer`].

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::{
    apply_regularization, kl_loss_and_grad, se_loss_and_grad, transe_loss_and_grad, wake_sleep_gradients, GradientSet,
};
use crate::graph::{shuffled_batches, Triple};
use crate::model::{EmbeddingSpace, RelationKind, TransEParams};
use crate::optim::{OptimizerKind, OptimizerState};
use crate::persist::StoredModel;
use crate::rng::{self, stream, Rng, Stream};
use crate::sampler::{generate_samples, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Energy model with full relation matrices.
    EnM,
    /// Energy model with diagonal relations.
    EnMd,
    /// RESCAL trained on squared error.
    ReSE,
    /// RESCAL trained on a mini-batch softmax cross-entropy.
    ReKL,
    TransE,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::EnM, ModelKind::EnMd, ModelKind::ReSE, ModelKind::ReKL, ModelKind::TransE];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::EnM => "enm",
            ModelKind::EnMd => "enmd",
            ModelKind::ReSE => "rese",
            ModelKind::ReKL => "rekl",
            ModelKind::TransE => "transe",
        }
    }

    pub fn is_energy(self) -> bool {
        matches!(self, ModelKind::EnM | ModelKind::EnMd)
    }

    /// Relation shape of the bilinear models; `None` for TransE.
    pub fn relation_kind(self) -> Option<RelationKind> {
        match self {
            ModelKind::EnMd => Some(RelationKind::Diagonal),
            ModelKind::EnM | ModelKind::ReSE | ModelKind::ReKL => Some(RelationKind::Full),
            ModelKind::TransE => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}` (expected enm, enmd, rese, rekl or transe)")))
    }
}

/// Named hyperparameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    /// Link-prediction benchmark on the demonstrator recording.
    LinkPrediction,
    /// Anomaly-scoring experiment.
    Anomaly,
    /// UMLS benchmark: `N = 64`; RESCAL baselines with lr 1e-3, L2 1e-4, 2×2 negatives.
    Umls,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "link-prediction" | "link" | "metrics" => Ok(Preset::LinkPrediction),
            "anomaly" => Ok(Preset::Anomaly),
            "umls" => Ok(Preset::Umls),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Subject-corrupted negatives per positive.
    pub neg_subject: usize,
    /// Object-corrupted negatives per positive.
    pub neg_object: usize,
    pub sampler: SamplerConfig,
    pub l1: f64,
    pub l2: f64,
    pub optimizer: OptimizerKind,
    pub init_mu: f64,
    pub init_sigma: f64,
    /// TransE soft-margin offset.
    pub margin: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Hyperparameters of `model` under `preset`.
    pub fn preset(model: ModelKind, preset: Preset) -> Result<Self> {
        use ModelKind::*;
        let base = |dim, lr, batch, neg: (usize, usize), l1, l2, optimizer, sigma| TrainConfig {
            model,
            dim,
            learning_rate: lr,
            epochs: DEFAULT_EPOCHS,
            batch_size: batch,
            neg_subject: neg.0,
            neg_object: neg.1,
            sampler: SamplerConfig::default(),
            l1,
            l2,
            optimizer,
            init_mu: 0.0,
            init_sigma: sigma,
            margin: DEFAULT_MARGIN,
            seed: 0,
        };
        let ag = OptimizerKind::Adagrad;
        let adam = OptimizerKind::Adam;
        let cfg = match (preset, model) {
            (Preset::LinkPrediction, ReSE) => base(12, 0.1, 100, (2, 2), 0.0, 5e-5, ag, 0.1),
            (Preset::LinkPrediction, ReKL) => base(12, 0.02, 100, (3, 3), 0.0, 1e-4, ag, 0.1),
            (Preset::LinkPrediction, EnM) => base(20, 0.05, 200, (0, 0), 1e-4, 0.0, ag, 0.1),
            (Preset::LinkPrediction, EnMd) => base(20, 0.02, 100, (0, 0), 1e-4, 0.0, ag, 0.1),
            (Preset::Anomaly, ReSE) => base(20, 0.01, 100, (2, 2), 0.0, 1e-6, adam, 0.1),
            (Preset::Anomaly, ReKL) => base(8, 0.02, 100, (3, 3), 0.0, 1e-6, adam, 0.1),
            (Preset::Anomaly, EnMd) => base(20, 0.02, 100, (0, 0), 0.0, 1e-3, ag, 0.1),
            (Preset::Anomaly | Preset::LinkPrediction, TransE) => base(8, 0.1, 100, (3, 3), 0.0, 1e-5, adam, 1.0),
            (Preset::Umls, ReSE | ReKL) => base(64, 1e-3, 100, (2, 2), 0.0, 1e-4, ag, 0.1),
            (Preset::Umls, EnM | EnMd) => {
                let mut cfg = Self::preset(model, Preset::LinkPrediction)?;
                cfg.dim = 64;
                cfg
            }
            (p, m) => return Err(Error::Config(format!("no {p:?} preset for model {m}"))),
        };
        Ok(cfg)
    }

    pub fn negatives_per_positive(&self) -> usize {
        self.neg_subject + self.neg_object
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("learning rate", self.learning_rate),
            ("l1", self.l1),
            ("l2", self.l2),
            ("init sigma", self.init_sigma),
            ("margin", self.margin),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !self.init_mu.is_finite() {
            return Err(Error::Config("init mu must be finite".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.model.is_energy() {
            if self.sampler.steps_per_chain == 0 {
                return Err(Error::Config("free samples must be at least 1".into()));
            }
            if self.sampler.chains_per_batch_triple == 0 {
                return Err(Error::Config("chains must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Fresh parameters drawn from the init stream of `seed`.
    pub fn init_model(&self, num_entities: usize, num_relations: usize) -> Result<StoredModel> {
        let mut rng = stream(self.seed, Stream::Init);
        match self.model.relation_kind() {
            Some(kind) => EmbeddingSpace::init(num_entities, num_relations, self.dim, kind, self.init_mu, self.init_sigma, &mut rng)
                .map(StoredModel::Bilinear),
            None => TransEParams::init(num_entities, num_relations, self.dim, self.init_mu, self.init_sigma, &mut rng)
                .map(StoredModel::TransE),
        }
    }
}

/// `k_subj` subject- and `k_obj` object-corrupted copies of `t`; each
/// replacement is uniform over the entities other than the original.
pub fn negative_samples(rng: &mut Rng, t: Triple, k_subj: usize, k_obj: usize, num_entities: usize) -> Result<Vec<Triple>> {
    if k_subj + k_obj == 0 {
        return Ok(Vec::new());
    }
    if num_entities < 2 {
        return Err(Error::Config(format!(
            "negative sampling needs at least 2 entities, vocabulary has {num_entities}"
        )));
    }
    let mut other = |current: usize| {
        let v = rng.random_range(0..num_entities - 1);
        if v >= current {
            v + 1
        } else {
            v
        }
    };
    let mut out = Vec::with_capacity(k_subj + k_obj);
    for _ in 0..k_subj {
        out.push(Triple::new(other(t.s), t.p, t.o));
    }
    for _ in 0..k_obj {
        out.push(Triple::new(t.s, t.p, other(t.o)));
    }
    Ok(out)
}

/// Batches of epoch `epoch`, shuffled deterministically from the run seed.
pub fn epoch_batches(train: &[Triple], cfg: &TrainConfig, epoch: usize) -> Result<Vec<Vec<Triple>>> {
    shuffled_batches(train, cfg.batch_size, rng::derive(cfg.seed, epoch as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub batches: usize,
    /// Summed training loss plus regularization penalty. For the energy model
    /// the loss is the negated two-phase score gap `⟨f⟩_S - ⟨f⟩_B`.
    pub loss: f64,
    /// Mean score of the training triples, taken before each batch update.
    pub mean_score: f64,
    /// Metropolis-Hastings acceptance rate; energy models only.
    pub acceptance_rate: Option<f64>,
}

struct Tally {
    batches: usize,
    loss: f64,
    score_sum: f64,
    scored: usize,
    proposals: usize,
    accepted: usize,
}

impl Tally {
    fn new() -> Self {
        Self {
            batches: 0,
            loss: 0.0,
            score_sum: 0.0,
            scored: 0,
            proposals: 0,
            accepted: 0,
        }
    }

    fn finish(self, epoch: usize, sampled: bool) -> EpochStats {
        EpochStats {
            epoch,
            batches: self.batches,
            loss: self.loss,
            mean_score: if self.scored == 0 { 0.0 } else { self.score_sum / self.scored as f64 },
            acceptance_rate: (sampled && self.proposals > 0).then(|| self.accepted as f64 / self.proposals as f64),
        }
    }
}

fn check_kind(cfg: &TrainConfig, expected: &[ModelKind]) -> Result<()> {
    if expected.contains(&cfg.model) {
        Ok(())
    } else {
        Err(Error::Config(format!("model {} cannot be trained by this loop", cfg.model)))
    }
}

fn check_batches(space_entities: usize, space_relations: usize, batches: &[Vec<Triple>]) -> Result<()> {
    for t in batches.iter().flatten() {
        if t.s >= space_entities || t.o >= space_entities || t.p >= space_relations {
            return Err(Error::IndexOutOfRange {
                what: "training triple",
                index: t.s.max(t.o).max(t.p),
                size: space_entities,
            });
        }
    }
    Ok(())
}

fn finish_step(
    entities: &mut [f64],
    relations: &mut [f64],
    grads: &mut GradientSet,
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
) -> Result<f64> {
    let penalty = apply_regularization(grads, entities, relations, cfg.l1, cfg.l2);
    opt.step(entities, relations, grads, cfg.learning_rate)?;
    Ok(penalty)
}

/// One wake-sleep epoch: per batch, draw model samples by Metropolis-Hastings,
/// take the two-phase log-likelihood gradient and ascend it.
pub fn train_energy_epoch(
    space: &mut EmbeddingSpace,
    batches: &[Vec<Triple>],
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    sampler_rng: &mut Rng,
    parallel: bool,
    epoch: usize,
) -> Result<EpochStats> {
    check_kind(cfg, &[ModelKind::EnM, ModelKind::EnMd])?;
    check_batches(space.num_entities(), space.num_relations(), batches)?;
    let mut tally = Tally::new();
    for batch in batches.iter().filter(|b| !b.is_empty()) {
        let samples = generate_samples(space, batch, &cfg.sampler, sampler_rng, parallel)?;
        let data_mean = batch.iter().map(|&t| space.score(t)).sum::<f64>() / batch.len() as f64;
        let model_mean = samples.samples.iter().map(|&t| space.score(t)).sum::<f64>() / samples.samples.len() as f64;
        let mut grads = wake_sleep_gradients(space, batch, &samples.samples);
        grads.scale(-1.0);
        let (entities, relations) = space.tables_mut();
        let penalty = finish_step(entities, relations, &mut grads, cfg, opt)?;
        tally.batches += 1;
        tally.loss += model_mean - data_mean + penalty;
        tally.score_sum += data_mean * batch.len() as f64;
        tally.scored += batch.len();
        tally.proposals += samples.proposals;
        tally.accepted += samples.accepted;
    }
    Ok(tally.finish(epoch, true))
}

fn train_bilinear_baseline(
    space: &mut EmbeddingSpace,
    batches: &[Vec<Triple>],
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    neg_rng: &mut Rng,
    epoch: usize,
    loss_fn: fn(&EmbeddingSpace, &[Triple], &[Triple], &mut GradientSet) -> f64,
) -> Result<EpochStats> {
    check_batches(space.num_entities(), space.num_relations(), batches)?;
    let mut tally = Tally::new();
    let mut grads = GradientSet::for_space(space);
    for batch in batches.iter().filter(|b| !b.is_empty()) {
        let mut negatives = Vec::with_capacity(batch.len() * cfg.negatives_per_positive());
        for &t in batch {
            negatives.extend(negative_samples(neg_rng, t, cfg.neg_subject, cfg.neg_object, space.num_entities())?);
        }
        tally.score_sum += batch.iter().map(|&t| space.score(t)).sum::<f64>();
        tally.scored += batch.len();
        grads.clear();
        let loss = loss_fn(space, batch, &negatives, &mut grads);
        let (entities, relations) = space.tables_mut();
        let penalty = finish_step(entities, relations, &mut grads, cfg, opt)?;
        tally.batches += 1;
        tally.loss += loss + penalty;
    }
    Ok(tally.finish(epoch, false))
}

/// One epoch of squared-error RESCAL: targets 1 for data, 0 for negatives.
pub fn train_rese_epoch(
    space: &mut EmbeddingSpace,
    batches: &[Vec<Triple>],
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    neg_rng: &mut Rng,
    epoch: usize,
) -> Result<EpochStats> {
    check_kind(cfg, &[ModelKind::ReSE])?;
    train_bilinear_baseline(space, batches, cfg, opt, neg_rng, epoch, se_loss_and_grad)
}

/// One epoch of RESCAL with a softmax over each batch's positives and negatives.
pub fn train_rekl_epoch(
    space: &mut EmbeddingSpace,
    batches: &[Vec<Triple>],
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    neg_rng: &mut Rng,
    epoch: usize,
) -> Result<EpochStats> {
    check_kind(cfg, &[ModelKind::ReKL])?;
    train_bilinear_baseline(space, batches, cfg, opt, neg_rng, epoch, kl_loss_and_grad)
}

/// One epoch of TransE with the soft-margin pair loss.
pub fn train_transe_epoch(
    params: &mut TransEParams,
    batches: &[Vec<Triple>],
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    neg_rng: &mut Rng,
    epoch: usize,
) -> Result<EpochStats> {
    check_kind(cfg, &[ModelKind::TransE])?;
    check_batches(params.num_entities(), params.num_relations(), batches)?;
    let mut tally = Tally::new();
    let mut grads = GradientSet::for_transe(params);
    for batch in batches.iter().filter(|b| !b.is_empty()) {
        let mut pairs = Vec::with_capacity(batch.len() * cfg.negatives_per_positive());
        for &t in batch {
            let negatives = negative_samples(neg_rng, t, cfg.neg_subject, cfg.neg_object, params.num_entities())?;
            pairs.extend(negatives.into_iter().map(|n| (t, n)));
        }
        tally.score_sum += batch.iter().map(|&t| -params.score_transe(t)).sum::<f64>();
        tally.scored += batch.len();
        grads.clear();
        let loss = transe_loss_and_grad(params, &pairs, cfg.margin, &mut grads);
        let (entities, relations) = params.tables_mut();
        let penalty = finish_step(entities, relations, &mut grads, cfg, opt)?;
        tally.batches += 1;
        tally.loss += loss + penalty;
    }
    Ok(tally.finish(epoch, false))
}

/// Model, optimizer memory and random streams of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    model: StoredModel,
    opt: OptimizerState,
    sampler_rng: Rng,
    neg_rng: Rng,
    epoch: usize,
    parallel: bool,
}

impl Trainer {
    /// Initializes fresh parameters for a vocabulary of the given size.
    pub fn new(cfg: TrainConfig, num_entities: usize, num_relations: usize) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.init_model(num_entities, num_relations)?;
        Self::with_model(cfg, model)
    }

    /// Continues from existing parameters with fresh optimizer memory.
    pub fn with_model(cfg: TrainConfig, model: StoredModel) -> Result<Self> {
        cfg.validate()?;
        let compatible = match (&model, cfg.model.relation_kind()) {
            (StoredModel::Bilinear(s), Some(kind)) => s.kind() == kind,
            (StoredModel::TransE(_), None) => true,
            _ => false,
        };
        if !compatible || model.dim() != cfg.dim {
            return Err(Error::Config(format!(
                "model parameters (dim {}) do not fit a {} model of dim {}",
                model.dim(),
                cfg.model,
                cfg.dim
            )));
        }
        if cfg.model.is_energy() {
            cfg.sampler.validate(model.num_entities(), model.num_relations())?;
        }
        let (ent_len, rel_len, row) = match &model {
            StoredModel::Bilinear(s) => (s.entities().len(), s.relations().len(), s.relation_len()),
            StoredModel::TransE(p) => (p.entities().len(), p.relations().len(), p.dim()),
        };
        let opt = OptimizerState::new(cfg.optimizer, ent_len, rel_len, cfg.dim, row);
        Ok(Self {
            sampler_rng: stream(cfg.seed, Stream::Sampler),
            neg_rng: stream(cfg.seed, Stream::Negatives),
            cfg,
            model,
            opt,
            epoch: 0,
            parallel: false,
        })
    }

    /// Runs sampler chains on the rayon pool. Results are identical either way.
    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &StoredModel {
        &self.model
    }

    pub fn into_model(self) -> StoredModel {
        self.model
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.opt
    }

    pub fn run_epoch(&mut self, train: &[Triple]) -> Result<EpochStats> {
        let batches = epoch_batches(train, &self.cfg, self.epoch)?;
        let epoch = self.epoch;
        let stats = match &mut self.model {
            StoredModel::Bilinear(space) => match self.cfg.model {
                ModelKind::EnM | ModelKind::EnMd => {
                    train_energy_epoch(space, &batches, &self.cfg, &mut self.opt, &mut self.sampler_rng, self.parallel, epoch)
                }
                ModelKind::ReSE => train_rese_epoch(space, &batches, &self.cfg, &mut self.opt, &mut self.neg_rng, epoch),
                ModelKind::ReKL => train_rekl_epoch(space, &batches, &self.cfg, &mut self.opt, &mut self.neg_rng, epoch),
                ModelKind::TransE => unreachable!("checked at construction"),
            },
            StoredModel::TransE(params) => {
                train_transe_epoch(params, &batches, &self.cfg, &mut self.opt, &mut self.neg_rng, epoch)
            }
        }?;
        if !self.model.is_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
        if !stats.loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        self.epoch += 1;
        Ok(stats)
    }

    /// Runs the configured number of epochs, calling `on_epoch` after each.
    pub fn fit(&mut self, train: &[Triple], mut on_epoch: impl FnMut(&StoredModel, &EpochStats) -> Result<()>) -> Result<Vec<EpochStats>> {
        let mut all = Vec::with_capacity(self.cfg.epochs);
        while self.epoch < self.cfg.epochs {
            let stats = self.run_epoch(train)?;
            on_epoch(&self.model, &stats)?;
            all.push(stats);
        }
        Ok(all)
    }
}
