//! End-to-end experiment: datasets, training regimes, key extraction and scoring.

use std::time::Instant;

use fdkg_core::channel::{build_environment, generate_env_range, EnvironmentDataset, EnvironmentSpec};
use fdkg_core::features::{fit_normalizer, Normalizer};
use fdkg_core::keygen::{align_keys, quantize_guardband, Party};
use fdkg_core::metrics::nmse;
use fdkg_core::nn::{init_network, layer_dims, NetworkParams};
use fdkg_core::randomness::{run_suite, BitStream, KeyResult, SuiteConfig};
use fdkg_core::rng::derive_seed;
use fdkg_core::strategies::{
    adapt, meta_train, partition_source_into_tasks, train_supervised, Algorithm, MetaConfig, MetaTaskSet,
    PairedFeatures, TrainConfig,
};
use fdkg_core::Matrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, TaskMode};
use crate::error::{Context, FdkgError, Result};
use crate::formats::chunk_keys;
use crate::report::{ExperimentReport, ReportRow};

// labels for derive_seed, one per consumer of the experiment seed
const SEED_NET_INIT: u64 = 0x11;
const SEED_PRETRAIN: u64 = 0x12;
const SEED_JOINT: u64 = 0x13;
const SEED_META: u64 = 0x14;
const SEED_ADAPT: u64 = 0x15;
const SEED_TASKS: u64 = 0x16;
const SEED_TASK_ENVS: u64 = 0x17;

/// Per-environment seed actually used for channel generation.
pub fn effective_env_spec(spec: &EnvironmentSpec, experiment_seed: u64) -> EnvironmentSpec {
    EnvironmentSpec { seed: derive_seed(spec.seed, experiment_seed), ..spec.clone() }
}

fn noise_snr(cfg: &ExperimentConfig, snr_db: f64) -> f64 {
    if cfg.noise {
        snr_db
    } else {
        f64::INFINITY
    }
}

/// One target environment's adaptation set and its test sets, one per SNR.
#[derive(Debug, Clone)]
pub struct TargetData {
    pub spec: EnvironmentSpec,
    pub adapt: EnvironmentDataset,
    pub tests: Vec<(f64, EnvironmentDataset)>,
}

#[derive(Debug, Clone)]
pub struct Datasets {
    pub source: Vec<EnvironmentDataset>,
    pub targets: Vec<TargetData>,
    /// Alice's (uplink) normalizer, fit on the source training data.
    pub alice_norm: Normalizer,
    /// Bob's (downlink) normalizer, fit on the source training data.
    pub bob_norm: Normalizer,
}

pub fn generate_datasets(cfg: &ExperimentConfig) -> Result<Datasets> {
    cfg.validate()?;
    let sizes = cfg.scaled_sizes();
    let train_snr = noise_snr(cfg, cfg.train_snr_db);
    let mut source = Vec::new();
    for spec in &cfg.environments.source {
        let env = build_environment(&effective_env_spec(spec, cfg.seed))?;
        let ds = generate_env_range(&env, 0, sizes.n_source, train_snr, &cfg.ofdm)
            .context(|| format!("source environment {}", spec.env_id))?;
        source.push(ds);
    }
    let targets = cfg
        .environments
        .targets
        .par_iter()
        .map(|spec| {
            let env = build_environment(&effective_env_spec(spec, cfg.seed))?;
            let ctx = || format!("target environment {}", spec.env_id);
            let adapt = generate_env_range(&env, 0, sizes.n_adapt, train_snr, &cfg.ofdm).context(ctx)?;
            let mut tests = Vec::new();
            for &snr in &cfg.snr_list_db {
                let ds = generate_env_range(&env, sizes.n_adapt as u64, sizes.n_test, noise_snr(cfg, snr), &cfg.ofdm)
                    .context(ctx)?;
                tests.push((snr, ds));
            }
            Ok(TargetData { spec: spec.clone(), adapt, tests })
        })
        .collect::<Result<Vec<_>>>()?;
    let stack = |f: fn(&EnvironmentDataset) -> Matrix| -> Result<Matrix> {
        let mut it = source.iter();
        let mut m = f(it.next().expect("validated non-empty"));
        for d in it {
            m = m.vstack(&f(d))?;
        }
        Ok(m)
    };
    let alice_norm = fit_normalizer(&stack(EnvironmentDataset::uplink_features)?)?;
    let bob_norm = fit_normalizer(&stack(EnvironmentDataset::downlink_features)?)?;
    Ok(Datasets { source, targets, alice_norm, bob_norm })
}

impl Datasets {
    pub fn features(&self, ds: &EnvironmentDataset) -> Result<PairedFeatures> {
        Ok(PairedFeatures::from_dataset(ds, &self.alice_norm, &self.bob_norm)?)
    }

    pub fn source_features(&self) -> Result<PairedFeatures> {
        let mut it = self.source.iter();
        let mut pf = self.features(it.next().expect("validated non-empty"))?;
        for d in it {
            pf = pf.concat(&self.features(d)?)?;
        }
        Ok(pf)
    }
}

/// Scores of one mapping on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScore {
    pub nmse: f64,
    pub ker: f64,
    pub kgr: f64,
    /// Alice's aligned key bits, sample after sample.
    pub alice_bits: Vec<u8>,
    pub aligned_bits: usize,
    pub samples_without_key: usize,
}

/// Maps the test uplink through `net` (or leaves it as is), quantizes both
/// parties and compares.
pub fn score_mapping(
    net: Option<&NetworkParams>,
    test: &PairedFeatures,
    epsilon: f64,
    n_subcarriers: usize,
) -> fdkg_core::Result<CellScore> {
    let predicted = match net {
        Some(n) => n.forward_batch(&test.inputs)?,
        None => test.inputs.clone(),
    };
    let n = nmse(&predicted, &test.targets)?;
    let q = fdkg_core::keygen::QuantizerConfig { epsilon };
    let (mut errors, mut aligned, mut empty) = (0usize, 0usize, 0usize);
    let mut alice_bits = Vec::new();
    for (pa, xb) in predicted.row_iter().zip(test.targets.row_iter()) {
        let ka = quantize_guardband(pa, &q, Party::Alice)?;
        let kb = quantize_guardband(xb, &q, Party::Bob)?;
        let al = align_keys(&ka, &kb)?;
        if al.is_empty() {
            empty += 1;
        }
        errors += al.bits_a.iter().zip(&al.bits_b).filter(|(a, b)| a != b).count();
        aligned += al.len();
        alice_bits.extend_from_slice(&al.bits_a);
    }
    let ker = if aligned == 0 { 1.0 } else { errors as f64 / aligned as f64 };
    let kgr = aligned as f64 / (test.len() * n_subcarriers) as f64;
    Ok(CellScore { nmse: n.value, ker, kgr, alice_bits, aligned_bits: aligned, samples_without_key: empty })
}

/// Models shared by every target environment.
#[derive(Debug, Clone)]
pub struct SharedModels {
    pub init: NetworkParams,
    pub pretrained: Option<NetworkParams>,
    pub pretrain_iterations: usize,
    pub meta: Option<NetworkParams>,
    pub meta_loss_history: Vec<f64>,
}

pub fn train_config(cfg: &ExperimentConfig, label: u64) -> TrainConfig {
    TrainConfig { seed: derive_seed(derive_seed(cfg.seed, label), cfg.train.seed), ..cfg.train }
}

pub fn meta_config(cfg: &ExperimentConfig, label: u64) -> MetaConfig {
    MetaConfig { seed: derive_seed(derive_seed(cfg.seed, label), cfg.meta.seed), ..cfg.meta }
}

pub fn build_tasks(cfg: &ExperimentConfig, data: &Datasets) -> Result<MetaTaskSet> {
    let t = cfg.tasks;
    let n_tasks = cfg.scaled_tasks();
    let seed = derive_seed(cfg.seed, SEED_TASKS);
    match t.mode {
        TaskMode::Partition => {
            let sources = data.source.iter().map(|d| data.features(d)).collect::<Result<Vec<_>>>()?;
            if sources.len() == 1 {
                return Ok(partition_source_into_tasks(&sources[0], n_tasks, t.samples_per_task, t.support_fraction, seed)?);
            }
            let per = n_tasks.div_ceil(sources.len());
            let mut set = MetaTaskSet::from_sources(&sources, per, t.samples_per_task, t.support_fraction, seed)?;
            set.tasks.truncate(n_tasks);
            Ok(set)
        }
        TaskMode::DistinctEnvironments => {
            let base = &cfg.environments.source[0];
            let train_snr = noise_snr(cfg, cfg.train_snr_db);
            let sources = (0..n_tasks)
                .into_par_iter()
                .map(|i| {
                    let spec = EnvironmentSpec {
                        env_id: 10_000 + i as u32,
                        seed: derive_seed(derive_seed(cfg.seed, SEED_TASK_ENVS), i as u64),
                        ..base.clone()
                    };
                    let env = build_environment(&spec)?;
                    let ds = generate_env_range(&env, 0, t.samples_per_task, train_snr, &cfg.ofdm)?;
                    data.features(&ds)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MetaTaskSet::from_sources(&sources, 1, t.samples_per_task, t.support_fraction, seed)?)
        }
    }
}

pub fn train_shared(cfg: &ExperimentConfig, data: &Datasets) -> Result<SharedModels> {
    let dims = layer_dims(cfg.ofdm.feature_dim(), &cfg.scaled_hidden());
    let init = init_network(&dims, derive_seed(cfg.seed, SEED_NET_INIT))?;
    let needs_pretrain = cfg.algorithms.iter().any(|a| matches!(a, Algorithm::Direct | Algorithm::Dtl));
    let (pretrained, pretrain_iterations) = if needs_pretrain {
        let out = train_supervised(&init, &data.source_features()?, &train_config(cfg, SEED_PRETRAIN))
            .context(|| "pretraining".into())?;
        (Some(out.model), out.iterations)
    } else {
        (None, 0)
    };
    let (meta, meta_loss_history) = if cfg.algorithms.contains(&Algorithm::Meta) {
        let tasks = build_tasks(cfg, data)?;
        let out = meta_train(&init, &tasks, &meta_config(cfg, SEED_META)).context(|| "meta-training".into())?;
        (Some(out.model), out.loss_history)
    } else {
        (None, Vec::new())
    };
    Ok(SharedModels { init, pretrained, pretrain_iterations, meta, meta_loss_history })
}

/// The network `algorithm` ends up with for one target, or `None` for the identity mapping.
pub fn target_model(
    cfg: &ExperimentConfig,
    data: &Datasets,
    shared: &SharedModels,
    algorithm: Algorithm,
    target: &TargetData,
) -> Result<Option<NetworkParams>> {
    let env = target.spec.env_id as u64;
    let ctx = || format!("{} on environment {}", algorithm.name(), env);
    let adapt_set = || data.features(&target.adapt);
    let adapt_cfg = MetaConfig { seed: derive_seed(derive_seed(cfg.seed, SEED_ADAPT), env), ..cfg.meta };
    Ok(match algorithm {
        Algorithm::Identity => None,
        Algorithm::Direct => Some(shared.pretrained.clone().expect("pretrained when direct is selected")),
        Algorithm::Dtl => {
            let pre = shared.pretrained.as_ref().expect("pretrained when dtl is selected");
            Some(adapt(pre, &adapt_set()?, &adapt_cfg).context(ctx)?)
        }
        Algorithm::Meta => {
            let init = shared.meta.as_ref().expect("meta-trained when meta is selected");
            Some(adapt(init, &adapt_set()?, &adapt_cfg).context(ctx)?)
        }
        Algorithm::Joint => {
            let combined = data.source_features()?.concat(&adapt_set()?)?;
            let mut tc = train_config(cfg, SEED_JOINT);
            tc.seed = derive_seed(tc.seed, env);
            if let Some(cap) = cfg.joint_max_iterations {
                tc.max_iterations = cap;
            }
            Some(train_supervised(&shared.init, &combined, &tc).context(ctx)?.model)
        }
    })
}

/// Everything a run produces; the report is the part written to disk.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: ExperimentReport,
    pub shared: SharedModels,
    /// `(algorithm, env_id, model)` for every learned mapping.
    pub models: Vec<(Algorithm, u32, NetworkParams)>,
    pub alice_norm: Normalizer,
    pub bob_norm: Normalizer,
    /// Keys handed to the randomness suite.
    pub keys: Vec<Vec<u8>>,
    pub randomness_details: Vec<KeyResult>,
    /// `(algorithm, env_id, snr_db, score)` for every cell.
    pub scores: Vec<(Algorithm, u32, f64, CellScore)>,
}

/// Thread count from `FDKG_THREADS`, else rayon's default.
pub fn thread_count() -> usize {
    std::env::var("FDKG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| FdkgError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_pipeline_inner(cfg))
}

fn run_pipeline_inner(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let t0 = Instant::now();
    let data = generate_datasets(cfg)?;
    let shared = train_shared(cfg, &data)?;
    let shared_time = t0.elapsed().as_secs_f64();

    let jobs: Vec<(Algorithm, usize)> =
        cfg.algorithms.iter().flat_map(|&a| (0..data.targets.len()).map(move |t| (a, t))).collect();
    let trained = jobs
        .par_iter()
        .map(|&(alg, t)| {
            let start = Instant::now();
            let model = target_model(cfg, &data, &shared, alg, &data.targets[t])?;
            Ok((alg, t, model, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>>>()?;

    let l = cfg.ofdm.n_subcarriers;
    let cells: Vec<(usize, usize)> =
        (0..trained.len()).flat_map(|j| (0..cfg.snr_list_db.len()).map(move |s| (j, s))).collect();
    let scored = cells
        .par_iter()
        .map(|&(j, s)| {
            let (alg, t, ref model, train_time) = trained[j];
            let target = &data.targets[t];
            let (snr, ref test) = target.tests[s];
            let start = Instant::now();
            let features = data.features(test)?;
            let score = score_mapping(model.as_ref(), &features, cfg.quantizer.epsilon, l)
                .context(|| format!("scoring {} on environment {} at {snr} dB", alg.name(), target.spec.env_id))?;
            let wall = shared_time + train_time + start.elapsed().as_secs_f64();
            Ok((alg, target.spec.env_id, snr, score, wall))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = ExperimentReport::default();
    for (alg, env, snr, score, wall) in &scored {
        if !(score.nmse.is_finite() && score.ker.is_finite() && score.kgr.is_finite()) {
            return Err(FdkgError::Core {
                context: format!("{} on environment {env} at {snr} dB", alg.name()),
                source: fdkg_core::Error::NonFinite("cell metrics"),
            });
        }
        report.rows.push(
            ReportRow {
                algorithm: alg.name().into(),
                env: *env,
                snr_db: *snr,
                nmse: score.nmse,
                ker: score.ker,
                kgr: score.kgr,
                wall_time_s: if cfg.record_wall_time { *wall } else { 0.0 },
                seed: cfg.seed,
            }
            .rounded(),
        );
    }

    let mut keys = Vec::new();
    let mut randomness_details = Vec::new();
    let rc = cfg.randomness;
    if rc.enabled {
        let bits: Vec<u8> = scored
            .iter()
            .filter(|(a, _, snr, _, _)| *a == rc.algorithm && *snr == rc.snr_db)
            .flat_map(|(_, _, _, s, _)| s.alice_bits.iter().copied())
            .collect();
        keys = chunk_keys(&bits, rc.key_bits, rc.max_keys);
        if !keys.is_empty() {
            let streams = keys.iter().map(|k| BitStream::new(k.clone())).collect::<fdkg_core::Result<Vec<_>>>()?;
            let suite = run_suite(&streams, &SuiteConfig::default())?;
            report.randomness = suite.summary;
            randomness_details = suite.details;
        }
    }

    let models = trained.into_iter().filter_map(|(a, t, m, _)| m.map(|m| (a, data.targets[t].spec.env_id, m))).collect();
    let scores = scored.into_iter().map(|(a, e, snr, s, _)| (a, e, snr, s)).collect();
    Ok(RunArtifacts {
        report,
        shared,
        models,
        alice_norm: data.alice_norm,
        bob_norm: data.bob_norm,
        keys,
        randomness_details,
        scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Snr,
    NAd,
    GAd,
    GTr,
    EBatch,
}

impl std::str::FromStr for SweepAxis {
    type Err = FdkgError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "snr" => SweepAxis::Snr,
            "n_ad" => SweepAxis::NAd,
            "g_ad" => SweepAxis::GAd,
            "g_tr" => SweepAxis::GTr,
            "e_batch" => SweepAxis::EBatch,
            other => return Err(FdkgError::Config(format!("unknown sweep axis {other:?}"))),
        })
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr",
            SweepAxis::NAd => "n_ad",
            SweepAxis::GAd => "g_ad",
            SweepAxis::GTr => "g_tr",
            SweepAxis::EBatch => "e_batch",
        }
    }

    /// `base` with this axis set to `value`; every other field, seeds included, is untouched.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(FdkgError::Config(format!("{} needs a non-negative integer, got {v}", self.name())))
            }
        };
        match self {
            SweepAxis::Snr => c.snr_list_db = vec![value],
            SweepAxis::NAd => {
                c.sizes.n_adapt = count(value)?;
                c.sizes.n_target = c.sizes.n_adapt + c.sizes.n_test;
            }
            SweepAxis::GAd => {
                c.meta.adapt_steps = count(value)?;
                c.joint_max_iterations = Some(count(value)?);
            }
            SweepAxis::GTr => c.meta.inner_steps = count(value)?,
            SweepAxis::EBatch => c.meta.task_batch = count(value)?,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub points: Vec<(f64, ExperimentReport)>,
}

impl SweepReport {
    /// Long format with the swept value in front of the usual columns.
    pub fn to_csv(&self) -> String {
        let mut out = format!("axis,value,{}\n", crate::report::REPORT_COLUMNS.join(","));
        for (v, rep) in &self.points {
            for line in rep.to_csv().lines().skip(1) {
                out.push_str(&format!("{},{},{line}\n", self.axis.name(), crate::report::fmt_sig(*v)));
            }
        }
        out
    }
}

pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(FdkgError::Config("sweep needs at least one value".into()));
    }
    let mut points = Vec::new();
    for &v in values {
        let cfg = axis.apply(base, v)?;
        points.push((v, run_pipeline(&cfg)?.report));
    }
    Ok(SweepReport { axis, points })
}
