use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::classifier::{loss_and_grad, predict};
use super::optim::{adamw_step, clip_gradients, lr_at, AdamState, TrainingConfig};
use super::params::{ModelConfig, ModelParams};
use super::vocab::{tokenize_pair, PairPrompt, Vocabulary};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::split::FoldAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Per-step record of an optimization run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
}

impl TrainingLog {
    /// `step,lr,loss,grad_norm` CSV with round-trippable floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,lr,loss,grad_norm\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{:?},{:?},{:?}", e.step, e.lr, e.loss, e.grad_norm);
        }
        out
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.entries.last().map(|e| e.loss)
    }
}

/// Draws batches from an index set, reshuffling with a fixed seed at the
/// start of every epoch.
pub struct EpochSampler {
    items: Vec<usize>,
    cursor: usize,
    rng: SplitMix64,
}

impl EpochSampler {
    pub fn new(items: Vec<usize>, seed: u64) -> Self {
        let mut s = Self {
            items,
            cursor: 0,
            rng: SplitMix64::derive(seed, 0xE90C),
        };
        s.rng.shuffle(&mut s.items);
        s
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.items.len() {
                self.rng.shuffle(&mut self.items);
                self.cursor = 0;
            }
            out.push(self.items[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Starting weights for fine-tuning.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Seeded Xavier-style initialization.
    Random,
    /// Encoder and embeddings from a pretrained model; head re-drawn.
    Pretrained(ModelParams),
}

impl Init {
    pub fn name(&self) -> &'static str {
        match self {
            Init::Random => "random",
            Init::Pretrained(_) => "pretrained",
        }
    }

    pub fn materialize(&self, config: ModelConfig, seed: u64) -> Result<ModelParams> {
        match self {
            Init::Random => ModelParams::init_random(config, seed),
            Init::Pretrained(p) => {
                if *p.config() != config {
                    return Err(Error::Config("pretrained weights were built for a different model configuration".into()));
                }
                let mut p = p.clone();
                p.reinit_head(seed);
                Ok(p)
            }
        }
    }
}

/// Result of training on one cross-validation fold.
#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub params: ModelParams,
    pub log: TrainingLog,
    pub validation_pair_ids: Vec<String>,
    pub validation_labels: Vec<bool>,
    pub validation_scores: Vec<f64>,
}

/// Prompts for every pair of the assignment's task, in assignment order.
pub fn task_prompts(dataset: &Dataset, folds: &FoldAssignment, max_len: usize) -> Result<(Vec<PairPrompt>, Vec<bool>)> {
    let pairs = dataset.task_pairs(folds.task);
    if pairs.len() != folds.pair_ids.len() {
        return Err(Error::Config(format!(
            "fold assignment covers {} pairs but the dataset has {} {} pairs",
            folds.pair_ids.len(),
            pairs.len(),
            folds.task
        )));
    }
    let vocab = Vocabulary;
    let mut prompts = Vec::with_capacity(pairs.len());
    let mut labels = Vec::with_capacity(pairs.len());
    for (pair, id) in pairs.iter().zip(&folds.pair_ids) {
        if pair.pair_id() != *id {
            return Err(Error::Config(format!("fold assignment lists {id} where the dataset has {}", pair.pair_id())));
        }
        let ab = dataset.antibody(&pair.antibody_id).ok_or_else(|| Error::Lookup(pair.antibody_id.clone()))?;
        let ag = dataset.antigen(&pair.antigen_id).ok_or_else(|| Error::Lookup(pair.antigen_id.clone()))?;
        prompts.push(tokenize_pair(ab, ag, &vocab, max_len)?);
        labels.push(pair.label);
    }
    Ok((prompts, labels))
}

/// Runs exactly `total_steps` optimizer updates on `prompts[train]`.
pub fn fit(params: &mut ModelParams, prompts: &[PairPrompt], labels: &[bool], train: &[usize], cfg: &TrainingConfig) -> Result<TrainingLog> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("empty training partition".into()));
    }
    let decay = params.layout().decay_mask();
    let mut state = AdamState::new(params.len());
    let mut sampler = EpochSampler::new(train.to_vec(), cfg.seed);
    let dropout = params.config().dropout > 0.0;
    let mut log = TrainingLog::default();
    for step in 0..cfg.total_steps {
        let idx = sampler.next_batch(cfg.batch_size);
        let batch: Vec<PairPrompt> = idx.iter().map(|&i| prompts[i].clone()).collect();
        let y: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        let drop_seed = dropout.then(|| SplitMix64::derive(cfg.seed, 0xD00D ^ step as u64).next_u64());
        let (loss, mut grads) = loss_and_grad(params, &batch, &y, drop_seed)?;
        let grad_norm = clip_gradients(&mut grads, cfg.clip_norm);
        let lr = lr_at(step + 1, cfg)?;
        adamw_step(&mut params.values, &grads, &mut state, lr, &decay, cfg)?;
        log.entries.push(LogEntry { step: step + 1, lr, loss, grad_norm });
    }
    Ok(log)
}

/// Trains on every fold except `fold_id` and scores the held-out fold.
pub fn train(
    dataset: &Dataset,
    folds: &FoldAssignment,
    fold_id: usize,
    init: &Init,
    model_cfg: &ModelConfig,
    train_cfg: &TrainingConfig,
) -> Result<TrainedFold> {
    if fold_id >= folds.k {
        return Err(Error::Config(format!("fold {fold_id} out of range for k = {}", folds.k)));
    }
    let (prompts, labels) = task_prompts(dataset, folds, model_cfg.max_input_len)?;
    let train_idx = folds.training_indices(fold_id);
    let val_idx = folds.validation_indices(fold_id);
    if train_idx.is_empty() {
        return Err(Error::Config(format!("fold {fold_id} leaves an empty training partition")));
    }
    let mut params = init.materialize(*model_cfg, train_cfg.seed)?;
    let log = fit(&mut params, &prompts, &labels, &train_idx, train_cfg)?;
    let val_prompts: Vec<PairPrompt> = val_idx.iter().map(|&i| prompts[i].clone()).collect();
    let scores = predict(&params, &val_prompts, train_cfg.batch_size)?;
    Ok(TrainedFold {
        params,
        log,
        validation_pair_ids: val_idx.iter().map(|&i| folds.pair_ids[i].clone()).collect(),
        validation_labels: val_idx.iter().map(|&i| labels[i]).collect(),
        validation_scores: scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_covers_each_epoch() {
        let mut s = EpochSampler::new((0..10).collect(), 4);
        let mut first: Vec<usize> = s.next_batch(10);
        first.sort_unstable();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
        let mut again = EpochSampler::new((0..10).collect(), 4);
        assert_eq!(again.next_batch(25), {
            let mut s = EpochSampler::new((0..10).collect(), 4);
            s.next_batch(25)
        });
    }

    #[test]
    fn log_csv() {
        let log = TrainingLog {
            entries: vec![LogEntry { step: 1, lr: 0.5, loss: 0.25, grad_norm: 1.0 }],
        };
        assert_eq!(log.to_csv(), "step,lr,loss,grad_norm\n1,0.5,0.25,1.0\n");
    }
}
