//! Experiment configuration files (TOML) and the shipped profiles.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{LorenzParams, SpikeSimConfig};
use crate::error::{Error, Result};
use crate::model::{AlternatorConfig, NetworkConfig};
use crate::numerics::{Activation, AdamConfig};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Generative,
    Seq2seq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Constant(f64),
    Schedule(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub sigma_x: f64,
    pub sigma_z: f64,
    pub alpha: AlphaSpec,
    #[serde(default = "default_hidden")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_hidden() -> Vec<usize> {
    vec![10, 10]
}

fn default_activation() -> Activation {
    Activation::Tanh
}

impl ModelSection {
    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            hidden_dims: self.hidden_dims.clone(),
            activation: self.activation,
        }
    }

    pub fn alternator(&self, obs_dim: usize, feat_dim: usize, seq_len: usize) -> Result<AlternatorConfig> {
        let alpha = match &self.alpha {
            AlphaSpec::Constant(a) => vec![*a; seq_len],
            AlphaSpec::Schedule(v) => v.clone(),
        };
        let cfg = AlternatorConfig {
            obs_dim,
            feat_dim,
            seq_len,
            sigma_x: self.sigma_x,
            sigma_z: self.sigma_z,
            alpha,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_epochs: usize,
    #[serde(default)]
    pub detach_marginal: bool,
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl TrainSection {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            base_lr: self.base_lr,
            min_lr: self.min_lr,
            warmup_epochs: self.warmup_epochs,
            seed,
            detach_marginal: self.detach_marginal,
            checkpoint_every: self.checkpoint_every,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSection {
    /// Simulate a fresh Lorenz / spike dataset from the run seed.
    Lorenz {
        n_sequences: usize,
        n_train: usize,
        #[serde(default)]
        lorenz: LorenzParams,
        #[serde(default)]
        spikes: SpikeSimConfig,
    },
    /// A dataset directory written by `simulate`.
    Dir { path: PathBuf },
}

pub const METRIC_NAMES: [&str; 6] = ["mae", "mse", "cc", "crps", "ssr", "loglik"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub metrics: Vec<String>,
    pub ensemble_size: usize,
    pub score_samples: usize,
    pub forecast_rates: Vec<f64>,
    pub impute_rates: Vec<f64>,
    /// Number of held-out sequences drawn as SVG comparisons.
    pub plots: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            metrics: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
            ensemble_size: 20,
            score_samples: 10,
            forecast_rates: Vec::new(),
            impute_rates: Vec::new(),
            plots: 3,
        }
    }
}

impl EvalSection {
    pub fn wants(&self, metric: &str) -> bool {
        self.metrics.iter().any(|m| m == metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: Task,
    pub seed: u64,
    pub model: ModelSection,
    pub train: TrainSection,
    pub data: DataSection,
    #[serde(default)]
    pub eval: EvalSection,
}

const PROFILES: [(&str, &str); 5] = [
    ("lorenz_seq2seq", include_str!("../../profiles/lorenz_seq2seq.toml")),
    ("lorenz_generative", include_str!("../../profiles/lorenz_generative.toml")),
    ("lorenz_impute_sweep", include_str!("../../profiles/lorenz_impute_sweep.toml")),
    ("lorenz_forecast_sweep", include_str!("../../profiles/lorenz_forecast_sweep.toml")),
    ("smoke", include_str!("../../profiles/smoke.toml")),
];

pub fn profile_names() -> Vec<&'static str> {
    PROFILES.iter().map(|(n, _)| *n).collect()
}

/// Looks up a shipped profile; `lorenz` is shorthand for `lorenz_seq2seq`.
pub fn profile(name: &str) -> Result<ExperimentConfig> {
    let name = if name == "lorenz" { "lorenz_seq2seq" } else { name };
    let (_, text) = PROFILES.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        Error::Config(format!("unknown profile `{name}` (available: {})", profile_names().join(", ")))
    })?;
    ExperimentConfig::from_toml(text, Path::new(name))
}

impl ExperimentConfig {
    /// Parses and validates; relative data paths resolve against `origin`'s directory.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", origin.display())))?;
        cfg.resolve_paths(origin);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the `experiment` entry of a run manifest (`.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let exp = v
                .get("experiment")
                .ok_or_else(|| Error::Config(format!("{}: no `experiment` entry", path.display())))?;
            let mut cfg: Self = serde_json::from_value(exp.clone())
                .map_err(|e| Error::Config(format!("{}: experiment: {e}", path.display())))?;
            cfg.resolve_paths(path);
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::from_toml(&text, path)
    }

    fn resolve_paths(&mut self, origin: &Path) {
        if let DataSection::Dir { path } = &mut self.data {
            if path.is_relative() {
                if let Some(dir) = origin.parent().filter(|d| !d.as_os_str().is_empty()) {
                    *path = dir.join(&*path);
                }
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("name `{}` must be a plain non-empty file name", self.name));
        }
        self.train.to_config(self.seed).validate().map_err(|e| Error::Config(format!("train: {e}")))?;
        match &self.data {
            DataSection::Lorenz {
                n_sequences,
                n_train,
                lorenz,
                spikes,
            } => {
                if *n_sequences == 0 || *n_train == 0 || n_train > n_sequences {
                    return bad(format!(
                        "data: need 1 <= n_train <= n_sequences, got n_train={n_train} n_sequences={n_sequences}"
                    ));
                }
                lorenz.validate().map_err(|e| Error::Config(format!("data.lorenz: {e}")))?;
                spikes.validate().map_err(|e| Error::Config(format!("data.spikes: {e}")))?;
                self.model
                    .alternator(spikes.channels, 3, lorenz.steps)
                    .map_err(|e| Error::Config(format!("model: {e}")))?;
            }
            DataSection::Dir { path } => {
                if !path.join("manifest.json").is_file() {
                    return bad(format!("data.path: no dataset manifest under {}", path.display()));
                }
            }
        }
        if let Some(m) = self.eval.metrics.iter().find(|m| !METRIC_NAMES.contains(&m.as_str())) {
            return bad(format!("eval.metrics: unknown metric `{m}` (known: {})", METRIC_NAMES.join(", ")));
        }
        if let Some(r) = self
            .eval
            .forecast_rates
            .iter()
            .chain(&self.eval.impute_rates)
            .find(|r| !(**r > 0.0 && **r < 1.0))
        {
            return bad(format!("eval: rates must lie in (0, 1), got {r}"));
        }
        if self.eval.ensemble_size == 0 || self.eval.score_samples == 0 {
            return bad("eval: ensemble_size and score_samples must be >= 1".into());
        }
        Ok(())
    }
}
