//! Training regimes for the feature-mapping network.
//!
//! * direct: train on the source environment only.
//! * joint: train on the source set plus the target's adaptation samples.
//! * DTL: pretrain on the source, then fine-tune on the adaptation samples.
//! * meta: first-order MAML over source tasks, then the same fine-tuning.
//!
//! Everything is generic over [`Model`], so the mechanics can be checked on
//! scalar toy models as well as the real network.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::EnvironmentDataset;
use crate::error::{Error, Result};
use crate::features::Normalizer;
use crate::matrix::Matrix;
use crate::nn::{adam_step, sgd_step, AdamState, Gradients, Model};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Direct,
    Joint,
    Dtl,
    Meta,
    /// No mapping at all: Alice quantizes her own uplink features. Only a
    /// meaningful baseline when the two bands coincide.
    Identity,
}

impl Algorithm {
    /// The four learned mappings.
    pub const ALL: [Algorithm; 4] = [Algorithm::Direct, Algorithm::Joint, Algorithm::Dtl, Algorithm::Meta];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Direct => "direct",
            Algorithm::Joint => "joint",
            Algorithm::Dtl => "dtl",
            Algorithm::Meta => "meta",
            Algorithm::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().chain([Algorithm::Identity]).find(|a| a.name() == s)
    }
}

/// Normalized input/target feature pairs, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedFeatures {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl PairedFeatures {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        Error::check_dim(inputs.rows(), targets.rows())?;
        Ok(Self { inputs, targets })
    }

    /// Uplink features through `input_norm`, downlink through `target_norm`.
    pub fn from_dataset(ds: &EnvironmentDataset, input_norm: &Normalizer, target_norm: &Normalizer) -> Result<Self> {
        Self::new(
            input_norm.normalize_matrix(&ds.uplink_features())?,
            target_norm.normalize_matrix(&ds.downlink_features())?,
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self { inputs: self.inputs.select_rows(indices), targets: self.targets.select_rows(indices) }
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        Self::new(self.inputs.vstack(&other.inputs)?, self.targets.vstack(&other.targets)?)
    }
}

/// One target environment, split into adaptation and held-out test samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSplit {
    pub adapt: EnvironmentDataset,
    pub test: EnvironmentDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub source: Vec<EnvironmentDataset>,
    pub targets: Vec<TargetSplit>,
}

impl DatasetSplits {
    pub fn validate(&self) -> Result<()> {
        if self.source.is_empty() || self.source.iter().any(|d| d.is_empty()) {
            return Err(Error::Empty("source environments"));
        }
        for t in &self.targets {
            if t.adapt.is_empty() || t.test.is_empty() {
                return Err(Error::Empty("target split"));
            }
            if t.adapt.env_id != t.test.env_id {
                return Err(Error::config("adaptation and test sets come from different environments"));
            }
            // users are indexed contiguously, so disjoint ranges mean disjoint samples
            let a = t.adapt.first_user..t.adapt.first_user + t.adapt.len() as u64;
            let b = t.test.first_user..t.test.first_user + t.test.len() as u64;
            if a.start < b.end && b.start < a.end {
                return Err(Error::config("adaptation and test sets overlap"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Iterations between loss evaluations for the plateau check.
    pub eval_interval: usize,
    pub plateau_window: usize,
    pub plateau_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 1e-3,
            max_iterations: 20_000,
            seed: 0,
            eval_interval: 10,
            plateau_window: 20,
            plateau_tol: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_interval == 0 {
            return Err(Error::config("batch_size and eval_interval must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub iterations: usize,
    /// Mean minibatch loss per evaluation interval.
    pub loss_history: Vec<f64>,
    pub plateaued: bool,
}

/// True once the best loss of the last `window` evaluations improves on the
/// loss `window` evaluations back by less than `tol` (relative).
pub fn plateaued(history: &[f64], window: usize, tol: f64) -> bool {
    if window == 0 || history.len() <= window {
        return false;
    }
    let k = history.len() - 1;
    let base = history[k - window];
    let best = history[k - window + 1..].iter().copied().fold(f64::INFINITY, f64::min);
    if base <= 0.0 {
        return true;
    }
    (base - best) / base < tol
}

/// Endless reshuffled minibatch indices; each epoch has its own stream.
struct BatchSampler {
    n: usize,
    batch: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    fn new(n: usize, batch: usize, seed: u64) -> Self {
        Self { n, batch: batch.min(n), seed, epoch: 0, order: Vec::with_capacity(n), pos: n }
    }

    fn next(&mut self) -> &[usize] {
        if self.pos + self.batch > self.n {
            self.order.clear();
            self.order.extend(0..self.n);
            self.order.shuffle(&mut rng::stream(self.seed, Domain::BatchOrder, self.epoch));
            self.epoch += 1;
            self.pos = 0;
        }
        let start = self.pos;
        self.pos += self.batch;
        &self.order[start..self.pos]
    }
}

/// Minibatch ADAM on the mean squared error until `max_iterations` or a loss plateau.
pub fn train_supervised<M: Model>(init: &M, data: &PairedFeatures, cfg: &TrainConfig) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut model = init.clone();
    let mut adam = AdamState::new(model.parameters().len());
    let mut sampler = BatchSampler::new(data.len(), cfg.batch_size, cfg.seed);
    let mut history = Vec::new();
    let (mut acc, mut acc_n) = (0.0, 0usize);
    let mut plateau = false;
    let mut it = 0;
    while it < cfg.max_iterations {
        let batch = data.select(sampler.next());
        let (loss, grads) = model.loss_and_gradient(&batch.inputs, &batch.targets)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        adam_step(&mut model, &grads, &mut adam, cfg.learning_rate)?;
        it += 1;
        acc += loss;
        acc_n += 1;
        if acc_n == cfg.eval_interval {
            history.push(acc / acc_n as f64);
            (acc, acc_n) = (0.0, 0);
            if plateaued(&history, cfg.plateau_window, cfg.plateau_tol) {
                plateau = true;
                break;
            }
        }
    }
    Ok(TrainOutcome { model, iterations: it, loss_history: history, plateaued: plateau })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    /// Inner (per-task) learning rate.
    pub inner_lr: f64,
    /// Cross-task learning rate.
    pub outer_lr: f64,
    pub inner_steps: usize,
    pub task_batch: usize,
    pub adapt_steps: usize,
    pub adapt_lr: f64,
    pub adapt_batch_size: usize,
    pub max_meta_iterations: usize,
    pub plateau_window: usize,
    pub plateau_tol: f64,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            inner_lr: 1e-3,
            outer_lr: 1e-3,
            inner_steps: 1,
            task_batch: 32,
            adapt_steps: 300,
            adapt_lr: 1e-3,
            adapt_batch_size: 128,
            max_meta_iterations: 2_000,
            plateau_window: 20,
            plateau_tol: 1e-4,
            seed: 0,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_lr >= 0.0 && self.outer_lr > 0.0 && self.adapt_lr > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.inner_steps == 0 || self.task_batch == 0 || self.adapt_batch_size == 0 {
            return Err(Error::config("inner_steps, task_batch and adapt_batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Fine-tunes a copy of `pretrained` with `adapt_steps` ADAM updates on the adaptation set.
pub fn adapt<M: Model>(pretrained: &M, adapt_set: &PairedFeatures, cfg: &MetaConfig) -> Result<M> {
    if adapt_set.is_empty() {
        return Err(Error::Empty("adaptation set"));
    }
    let train = TrainConfig {
        batch_size: cfg.adapt_batch_size,
        learning_rate: cfg.adapt_lr,
        max_iterations: cfg.adapt_steps,
        seed: rng::derive_seed(cfg.seed, 0xAD),
        eval_interval: 1,
        plateau_window: 0,
        plateau_tol: 0.0,
    };
    Ok(train_supervised(pretrained, adapt_set, &train)?.model)
}

/// `steps` full-batch gradient descent updates on the support set, starting from `global`.
pub fn inner_update<M: Model>(global: &M, support: &PairedFeatures, alpha: f64, steps: usize) -> Result<M> {
    if support.is_empty() {
        return Err(Error::Empty("support set"));
    }
    let mut local = global.clone();
    for _ in 0..steps {
        let (_, g) = local.loss_and_gradient(&support.inputs, &support.targets)?;
        sgd_step(&mut local, &g, alpha)?;
    }
    Ok(local)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTask {
    pub support: PairedFeatures,
    pub query: PairedFeatures,
    /// Row indices into the source the task was cut from.
    pub support_idx: Vec<usize>,
    pub query_idx: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTaskSet {
    pub tasks: Vec<MetaTask>,
    pub samples_per_task: usize,
}

impl MetaTaskSet {
    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Tasks cut from several sources (e.g. distinct environments), `tasks_per_source` from each.
    pub fn from_sources(
        sources: &[PairedFeatures],
        tasks_per_source: usize,
        samples_per_task: usize,
        support_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut tasks = Vec::new();
        for (i, src) in sources.iter().enumerate() {
            let s = rng::derive_seed(seed, i as u64);
            tasks.extend(partition_source_into_tasks(src, tasks_per_source, samples_per_task, support_fraction, s)?.tasks);
        }
        Ok(Self { tasks, samples_per_task })
    }
}

/// Shuffles the first `n_tasks * samples_per_task` source rows into disjoint
/// tasks and splits each into support and query.
pub fn partition_source_into_tasks(
    source: &PairedFeatures,
    n_tasks: usize,
    samples_per_task: usize,
    support_fraction: f64,
    seed: u64,
) -> Result<MetaTaskSet> {
    let needed = n_tasks * samples_per_task;
    if needed > source.len() {
        return Err(Error::InsufficientData { needed, available: source.len() });
    }
    if n_tasks == 0 {
        return Err(Error::config("n_tasks must be positive"));
    }
    let n_support = libm::round(support_fraction * samples_per_task as f64) as usize;
    if !(support_fraction > 0.0 && support_fraction < 1.0) || n_support == 0 || n_support >= samples_per_task {
        return Err(Error::config("support fraction leaves an empty support or query set"));
    }
    let mut order: Vec<usize> = (0..needed).collect();
    order.shuffle(&mut rng::stream(seed, Domain::TaskPartition, 0));
    let tasks = order
        .chunks_exact(samples_per_task)
        .map(|chunk| {
            let (s, q) = chunk.split_at(n_support);
            MetaTask { support: source.select(s), query: source.select(q), support_idx: s.to_vec(), query_idx: q.to_vec() }
        })
        .collect();
    Ok(MetaTaskSet { tasks, samples_per_task })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaOutcome<M> {
    pub model: M,
    pub iterations: usize,
    /// Summed query loss `L_total` of every meta-iteration.
    pub loss_history: Vec<f64>,
    pub plateaued: bool,
}

/// Summed query loss and first-order meta-gradient for the given tasks.
pub fn meta_gradient<M: Model>(global: &M, tasks: &[&MetaTask], cfg: &MetaConfig) -> Result<(f64, Gradients)> {
    let mut total = 0.0;
    let mut grad = Gradients::zeros(global.parameters().len());
    for task in tasks {
        let local = inner_update(global, &task.support, cfg.inner_lr, cfg.inner_steps)?;
        let (loss, g) = local.loss_and_gradient(&task.query.inputs, &task.query.targets)?;
        total += loss;
        grad.accumulate(&g)?;
    }
    Ok((total, grad))
}

/// One cross-task update of `global`; returns `L_total` before the update.
pub fn meta_step<M: Model>(global: &mut M, tasks: &[&MetaTask], cfg: &MetaConfig, adam: &mut AdamState) -> Result<f64> {
    let (total, grad) = meta_gradient(global, tasks, cfg)?;
    if !total.is_finite() || !grad.is_finite() {
        return Err(Error::NonFinite("meta loss"));
    }
    adam_step(global, &grad, adam, cfg.outer_lr)?;
    Ok(total)
}

/// First-order MAML: each round samples `task_batch` tasks, adapts to each
/// support set, and applies ADAM to the sum of query-loss gradients taken at
/// the adapted parameters.
pub fn meta_train<M: Model>(init: &M, tasks: &MetaTaskSet, cfg: &MetaConfig) -> Result<MetaOutcome<M>> {
    cfg.validate()?;
    if cfg.task_batch > tasks.n_tasks() {
        return Err(Error::config(alloc::format!(
            "task_batch {} exceeds the {} available tasks",
            cfg.task_batch,
            tasks.n_tasks()
        )));
    }
    let mut model = init.clone();
    let mut adam = AdamState::new(model.parameters().len());
    let mut history = Vec::new();
    let mut plateau = false;
    let mut ids: Vec<usize> = (0..tasks.n_tasks()).collect();
    for t in 0..cfg.max_meta_iterations {
        let mut r = rng::stream(cfg.seed, Domain::TaskSampling, t as u64);
        let (chosen, _) = ids.partial_shuffle(&mut r, cfg.task_batch);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        let batch: Vec<&MetaTask> = chosen.iter().map(|&i| &tasks.tasks[i]).collect();
        history.push(meta_step(&mut model, &batch, cfg, &mut adam)?);
        if plateaued(&history, cfg.plateau_window, cfg.plateau_tol) {
            plateau = true;
            break;
        }
    }
    Ok(MetaOutcome { model, iterations: history.len(), loss_history: history, plateaued: plateau })
}
