use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrainingConfig};
use crate::split::SplitStrategy;

/// How the encoder is initialized before fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Random,
    Pretrained,
}

impl InitMode {
    pub const ALL: [InitMode; 2] = [InitMode::Random, InitMode::Pretrained];

    pub fn as_str(self) -> &'static str {
        match self {
            InitMode::Random => "random",
            InitMode::Pretrained => "pretrained",
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitMode::Random),
            "pretrained" | "finetuned" => Ok(InitMode::Pretrained),
            other => Err(Error::Config(format!("unknown init mode '{other}' (expected random or pretrained)"))),
        }
    }
}

/// Masked-token pretraining budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainingConfig {
    pub steps: usize,
    pub max_lr: f64,
    pub batch_size: usize,
    /// Number of complexes drawn when the corpus is generated.
    pub corpus_size: usize,
    /// Seed of the generated corpus, independent of the run seeds.
    pub corpus_seed: u64,
    /// Token budget per corpus prompt.
    pub corpus_max_len: usize,
}

impl Default for PretrainingConfig {
    fn default() -> Self {
        Self {
            steps: 32000,
            max_lr: 3e-3,
            batch_size: 8,
            corpus_size: 2000,
            corpus_seed: 100,
            corpus_max_len: 128,
        }
    }
}

impl PretrainingConfig {
    pub fn training_config(&self, base: &TrainingConfig, seed: u64) -> TrainingConfig {
        TrainingConfig {
            max_lr: self.max_lr,
            total_steps: self.steps,
            batch_size: self.batch_size,
            warmup_steps: None,
            seed,
            ..*base
        }
    }
}

/// One (task, strategy, init) cell of the experiment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub task: Task,
    pub strategy: SplitStrategy,
    pub init: InitMode,
}

/// Everything a matrix run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub tasks: Vec<Task>,
    pub strategies: Vec<SplitStrategy>,
    pub inits: Vec<InitMode>,
    pub k: usize,
    pub seeds: Vec<u64>,
    pub cluster_min_identity: f64,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub pretraining: PretrainingConfig,
}

/// Encoder sized for single-core runs over short synthetic sequences.
pub fn desk_model() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        d_ff: 32,
        max_input_len: 900,
        dropout: 0.0,
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            tasks: Task::ALL.to_vec(),
            strategies: SplitStrategy::ALL.to_vec(),
            inits: InitMode::ALL.to_vec(),
            k: 5,
            seeds: vec![0],
            cluster_min_identity: 0.5,
            model: desk_model(),
            training: TrainingConfig {
                max_lr: 3e-3,
                ..TrainingConfig::default()
            },
            pretraining: PretrainingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Cells in deterministic order: task, strategy, init.
    pub fn specs(&self) -> Vec<ExperimentSpec> {
        let mut out = Vec::new();
        for &task in &self.tasks {
            for &strategy in &self.strategies {
                for &init in &self.inits {
                    out.push(ExperimentSpec { task, strategy, init });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.tasks.is_empty() || self.strategies.is_empty() || self.inits.is_empty() {
            return Err(Error::Config("tasks, strategies and inits must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.cluster_min_identity) {
            return Err(Error::Config("cluster_min_identity must lie in [0, 1]".into()));
        }
        self.model.validate()?;
        self.training.validate()?;
        if self.inits.contains(&InitMode::Pretrained) && self.pretraining.steps > 0 {
            self.pretraining.training_config(&self.training, 0).validate()?;
        }
        Ok(())
    }

    /// Parses TOML or JSON, chosen by file extension (`.json` is JSON,
    /// anything else TOML).
    pub fn from_path(path: &Path) -> Result<Self> {
        crate::config_file::read_config(path)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}
