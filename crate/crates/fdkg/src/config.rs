//! Experiment configuration: one JSON document, optionally layered over a
//! named profile.

use std::path::Path;

use fdkg_core::channel::{EnvironmentSpec, OfdmConfig};
use fdkg_core::keygen::QuantizerConfig;
use fdkg_core::nn::FULL_HIDDEN;
use fdkg_core::strategies::{Algorithm, MetaConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{FdkgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Paper,
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = FdkgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(FdkgError::Config(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environments {
    pub source: Vec<EnvironmentSpec>,
    pub targets: Vec<EnvironmentSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sizes {
    /// Samples per source environment.
    pub n_source: usize,
    /// Samples per target environment, split into adaptation and test.
    pub n_target: usize,
    pub n_adapt: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    /// Tasks are disjoint partitions of the source environment(s).
    Partition,
    /// One synthetic environment per task, each contributing a single task.
    DistinctEnvironments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub n_tasks: usize,
    pub samples_per_task: usize,
    pub support_fraction: f64,
    pub mode: TaskMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomnessConfig {
    pub enabled: bool,
    pub algorithm: Algorithm,
    pub snr_db: f64,
    pub key_bits: usize,
    pub max_keys: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ofdm: OfdmConfig,
    pub environments: Environments,
    pub sizes: Sizes,
    pub snr_list_db: Vec<f64>,
    /// SNR of every training and adaptation set.
    pub train_snr_db: f64,
    /// When false no estimation noise is added anywhere; SNR values only label rows.
    pub noise: bool,
    pub algorithms: Vec<Algorithm>,
    pub quantizer: QuantizerConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub meta: MetaConfig,
    /// Iteration cap for the joint algorithm; `None` uses `train.max_iterations`.
    #[serde(default)]
    pub joint_max_iterations: Option<usize>,
    pub tasks: TaskConfig,
    pub randomness: RandomnessConfig,
    pub seed: u64,
    /// Shrinks sample counts, task counts and hidden widths proportionally.
    pub scale_factor: f64,
    /// Wall time makes reports machine-dependent, so it is off by default.
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Paper => Self::paper(),
            Profile::Desk => Self::desk(),
        }
    }

    pub fn paper() -> Self {
        Self {
            ofdm: OfdmConfig::default(),
            environments: Environments {
                source: vec![EnvironmentSpec::new(1, 101)],
                targets: vec![EnvironmentSpec::new(2, 202), EnvironmentSpec::new(3, 303)],
            },
            sizes: Sizes { n_source: 40_000, n_target: 5_000, n_adapt: 1_000, n_test: 4_000 },
            snr_list_db: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            train_snr_db: 20.0,
            noise: true,
            algorithms: Algorithm::ALL.to_vec(),
            quantizer: QuantizerConfig::default(),
            network: NetworkConfig { hidden: FULL_HIDDEN.to_vec() },
            train: TrainConfig::default(),
            meta: MetaConfig::default(),
            joint_max_iterations: None,
            tasks: TaskConfig { n_tasks: 400, samples_per_task: 100, support_fraction: 0.5, mode: TaskMode::Partition },
            randomness: RandomnessConfig {
                enabled: true,
                algorithm: Algorithm::Meta,
                snr_db: 20.0,
                key_bits: 128,
                max_keys: 718,
            },
            seed: 0,
            scale_factor: 1.0,
            record_wall_time: false,
        }
    }

    /// Small enough for a laptop: 4000 source samples cut into 40 tasks of 100.
    pub fn desk() -> Self {
        let mut c = Self::paper();
        c.sizes = Sizes { n_source: 4_000, n_target: 1_000, n_adapt: 500, n_test: 500 };
        c.snr_list_db = vec![20.0];
        c.network.hidden = vec![128, 256, 256, 128];
        c.tasks.n_tasks = 40;
        c.train.max_iterations = 3_000;
        c.meta.max_meta_iterations = 300;
        c
    }

    /// Reads a JSON document and merges it over `base`, key by key.
    pub fn from_json_over(base: &Self, text: &str) -> Result<Self> {
        let overlay: Value =
            serde_json::from_str(text).map_err(|e| FdkgError::Config(format!("config is not valid JSON: {e}")))?;
        let mut merged = serde_json::to_value(base).expect("config serializes");
        merge(&mut merged, overlay);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| FdkgError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, profile: Profile) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FdkgError::io(path, e))?;
        Self::from_json_over(&Self::profile(profile), &text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FdkgError::Config(m));
        self.ofdm.validate()?;
        for spec in self.environments.source.iter().chain(&self.environments.targets) {
            spec.validate()?;
        }
        if self.environments.source.is_empty() {
            return bad("at least one source environment is required".into());
        }
        if !(self.scale_factor > 0.0 && self.scale_factor <= 1.0) {
            return bad(format!("scale_factor {} outside (0, 1]", self.scale_factor));
        }
        let s = self.sizes;
        if s.n_adapt + s.n_test != s.n_target {
            return bad(format!("n_adapt {} + n_test {} != n_target {}", s.n_adapt, s.n_test, s.n_target));
        }
        if s.n_source == 0 || s.n_adapt == 0 || s.n_test == 0 {
            return bad("sample counts must be positive".into());
        }
        if self.snr_list_db.is_empty() || self.snr_list_db.iter().any(|v| !v.is_finite()) {
            return bad("snr_list_db must be a non-empty list of finite values".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected".into());
        }
        if self.network.hidden.iter().any(|&w| w == 0) {
            return bad("hidden widths must be positive".into());
        }
        self.quantizer.validate()?;
        self.train.validate()?;
        self.meta.validate()?;
        let t = self.tasks;
        if self.algorithms.contains(&Algorithm::Meta) {
            if t.mode == TaskMode::Partition {
                let per_source = self.scaled(s.n_source);
                let n_src = self.environments.source.len();
                let tasks_per = self.scaled_tasks().div_ceil(n_src);
                if tasks_per * t.samples_per_task > per_source {
                    return bad(format!(
                        "{tasks_per} tasks x {} samples exceed the {per_source} source samples",
                        t.samples_per_task
                    ));
                }
            }
            if self.meta.task_batch > self.scaled_tasks() {
                return bad(format!("task_batch {} exceeds n_tasks {}", self.meta.task_batch, self.scaled_tasks()));
            }
        }
        if self.randomness.key_bits == 0 {
            return bad("randomness.key_bits must be positive".into());
        }
        Ok(())
    }

    pub fn scaled(&self, n: usize) -> usize {
        ((n as f64 * self.scale_factor).round() as usize).max(1)
    }

    pub fn scaled_tasks(&self) -> usize {
        self.scaled(self.tasks.n_tasks)
    }

    /// Sizes after `scale_factor`; the adaptation/test split keeps its ratio.
    pub fn scaled_sizes(&self) -> Sizes {
        let n_adapt = self.scaled(self.sizes.n_adapt);
        let n_test = self.scaled(self.sizes.n_test);
        Sizes { n_source: self.scaled(self.sizes.n_source), n_target: n_adapt + n_test, n_adapt, n_test }
    }

    pub fn scaled_hidden(&self) -> Vec<usize> {
        self.network.hidden.iter().map(|&w| self.scaled(w)).collect()
    }
}

/// Recursive object merge; anything that is not an object on both sides is replaced.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_valid() {
        ExperimentConfig::paper().validate().unwrap();
        ExperimentConfig::desk().validate().unwrap();
    }

    #[test]
    fn overlay_merges_nested_fields() {
        let base = ExperimentConfig::desk();
        let cfg = ExperimentConfig::from_json_over(&base, r#"{"meta": {"inner_steps": 4}, "seed": 9}"#).unwrap();
        assert_eq!(cfg.meta.inner_steps, 4);
        assert_eq!(cfg.meta.task_batch, base.meta.task_batch);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn rejects_bad_documents() {
        let base = ExperimentConfig::desk();
        assert!(ExperimentConfig::from_json_over(&base, "{").is_err());
        assert!(ExperimentConfig::from_json_over(&base, r#"{"nonsense": 1}"#).is_err());
        assert!(ExperimentConfig::from_json_over(&base, r#"{"scale_factor": 0}"#).is_err());
        assert!(ExperimentConfig::from_json_over(&base, r#"{"sizes": {"n_adapt": 10}}"#).is_err());
        assert!(ExperimentConfig::from_json_over(&base, r#"{"meta": {"task_batch": 64}}"#).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let c = ExperimentConfig::paper();
        assert_eq!(ExperimentConfig::from_json_over(&ExperimentConfig::desk(), &c.to_json()).unwrap(), c);
    }

    #[test]
    fn scaling_shrinks_sizes_and_widths() {
        let mut c = ExperimentConfig::paper();
        c.scale_factor = 0.1;
        assert_eq!(c.scaled_sizes().n_source, 4_000);
        assert_eq!(c.scaled_hidden(), [51, 102, 102, 51]);
        assert_eq!(c.scaled_tasks(), 40);
    }
}
