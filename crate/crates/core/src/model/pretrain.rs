//! Masked-token pretraining with an output projection tied to the residue
//! embeddings.

use rayon::prelude::*;

use super::encoder::{encode, encode_backward};
use super::linalg::{matmul_add, matmul_at_add, matmul_bt_add, sum_rows_add};
use super::optim::{adamw_step, clip_gradients, lr_at, AdamState, TrainingConfig};
use super::params::{ModelConfig, ModelParams};
use super::train::{EpochSampler, LogEntry, TrainingLog};
use super::vocab::{PairPrompt, TokenId, Vocabulary, CLS, FIRST_RESIDUE, MASK, N_RESIDUES};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const MASK_RATE: f64 = 0.15;

/// `[CLS, residues…]` prompts for single sequences, truncated to `max_len`.
pub fn sequence_corpus<'a>(sequences: impl IntoIterator<Item = &'a [u8]>, max_len: usize) -> Vec<PairPrompt> {
    let vocab = Vocabulary;
    sequences
        .into_iter()
        .map(|s| {
            let mut tokens = vec![CLS];
            tokens.extend(s.iter().take(max_len - 1).map(|&r| vocab.residue_id(r).expect("validated residue")));
            PairPrompt { tokens }
        })
        .collect()
}

/// A prompt with some residues hidden, and the residue index (0..21) behind
/// each hidden position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedPrompt {
    pub tokens: Vec<TokenId>,
    pub positions: Vec<usize>,
    pub targets: Vec<usize>,
}

/// Selects 15% of residue positions (at least one) and corrupts them:
/// 80% become `MASK`, 10% a random residue, 10% stay unchanged.
/// With `always_mask`, every selected position becomes `MASK`.
pub fn mask_prompt(prompt: &PairPrompt, rng: &mut SplitMix64, always_mask: bool) -> MaskedPrompt {
    let vocab = Vocabulary;
    let mut tokens = prompt.unpadded().to_vec();
    let candidates: Vec<usize> = (0..tokens.len()).filter(|&i| vocab.is_residue(tokens[i])).collect();
    let mut positions: Vec<usize> = candidates.iter().copied().filter(|_| rng.bernoulli(MASK_RATE)).collect();
    if positions.is_empty() && !candidates.is_empty() {
        positions.push(candidates[rng.below(candidates.len())]);
    }
    let targets = positions.iter().map(|&p| (tokens[p] - FIRST_RESIDUE) as usize).collect();
    for &p in &positions {
        let u = rng.next_f64();
        if always_mask || u < 0.8 {
            tokens[p] = MASK;
        } else if u < 0.9 {
            tokens[p] = FIRST_RESIDUE + rng.below(N_RESIDUES) as TokenId;
        }
    }
    MaskedPrompt { tokens, positions, targets }
}

fn residue_logits(params: &ModelParams, m: &MaskedPrompt, rng: Option<&mut SplitMix64>) -> Result<(Vec<f64>, Vec<f64>, super::encoder::EncoderCache)> {
    let (hidden, cache) = encode(params, &m.tokens, &m.positions, rng)?;
    let layout = params.layout();
    let d = params.config().d_model;
    let emb = &params.values[layout.tok_emb + FIRST_RESIDUE as usize * d..layout.tok_emb + (FIRST_RESIDUE as usize + N_RESIDUES) * d];
    let rows = m.positions.len();
    let mut logits = vec![0.0; rows * N_RESIDUES];
    for r in 0..rows {
        logits[r * N_RESIDUES..(r + 1) * N_RESIDUES].copy_from_slice(&params.values[layout.mlm_bias..layout.mlm_bias + N_RESIDUES]);
    }
    matmul_bt_add(&hidden, rows, d, emb, N_RESIDUES, &mut logits);
    Ok((logits, hidden, cache))
}

fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

/// Mean cross-entropy over all masked positions of the batch and its gradient.
pub fn mlm_loss_and_grad(params: &ModelParams, batch: &[MaskedPrompt], dropout_seed: Option<u64>) -> Result<(f64, Vec<f64>)> {
    let total: usize = batch.iter().map(|m| m.positions.len()).sum();
    if total == 0 {
        return Err(Error::Config("masked batch has no masked positions".into()));
    }
    let n = total as f64;
    let layout = params.layout();
    let d = params.config().d_model;
    let emb_start = layout.tok_emb + FIRST_RESIDUE as usize * d;
    let emb = &params.values[emb_start..emb_start + N_RESIDUES * d];
    let per_item: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .enumerate()
        .filter(|(_, m)| !m.positions.is_empty())
        .map(|(i, m)| {
            let mut rng = dropout_seed.map(|s| SplitMix64::derive(s, i as u64));
            let (logits, hidden, cache) = residue_logits(params, m, rng.as_mut())?;
            let rows = m.positions.len();
            let mut loss = 0.0;
            let mut dlogits = vec![0.0; rows * N_RESIDUES];
            for r in 0..rows {
                let lp = log_softmax_row(&logits[r * N_RESIDUES..(r + 1) * N_RESIDUES]);
                loss -= lp[m.targets[r]];
                for (c, v) in lp.iter().enumerate() {
                    dlogits[r * N_RESIDUES + c] = v.exp() / n;
                }
                dlogits[r * N_RESIDUES + m.targets[r]] -= 1.0 / n;
            }
            let mut grads = vec![0.0; params.len()];
            sum_rows_add(&dlogits, &mut grads[layout.mlm_bias..layout.mlm_bias + N_RESIDUES]);
            matmul_at_add(&dlogits, rows, N_RESIDUES, &hidden, d, &mut grads[emb_start..emb_start + N_RESIDUES * d]);
            let mut d_hidden = vec![0.0; rows * d];
            matmul_add(&dlogits, rows, N_RESIDUES, emb, d, &mut d_hidden);
            encode_backward(params, &cache, &d_hidden, &mut grads);
            Ok((loss / n, grads))
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grads = vec![0.0; params.len()];
    for (l, g) in per_item {
        loss += l;
        grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((loss, grads))
}

/// Fraction of masked residues (all replaced by `MASK`) whose arg-max
/// prediction is correct. Chance level is 1/21.
pub fn mlm_accuracy(params: &ModelParams, corpus: &[PairPrompt], seed: u64) -> Result<f64> {
    let mut rng = SplitMix64::derive(seed, 0xACC);
    let masked: Vec<MaskedPrompt> = corpus.iter().map(|p| mask_prompt(p, &mut rng, true)).collect();
    let counts: Vec<(usize, usize)> = masked
        .par_iter()
        .filter(|m| !m.positions.is_empty())
        .map(|m| {
            let (logits, _, _) = residue_logits(params, m, None)?;
            let hits = m
                .targets
                .iter()
                .enumerate()
                .filter(|&(r, &t)| {
                    let row = &logits[r * N_RESIDUES..(r + 1) * N_RESIDUES];
                    let best = (0..N_RESIDUES).fold(0, |b, c| if row[c] > row[b] { c } else { b });
                    best == t
                })
                .count();
            Ok((hits, m.positions.len()))
        })
        .collect::<Result<_>>()?;
    let (hits, total) = counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if total == 0 {
        return Err(Error::UndefinedMetric("corpus has no residues to mask".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// Pretrains a freshly initialized model (seed `cfg.seed`) on `corpus`.
/// The classification head is left at its initial value.
pub fn pretrain_mlm(corpus: &[PairPrompt], model_cfg: &ModelConfig, cfg: &TrainingConfig) -> Result<(ModelParams, TrainingLog)> {
    if corpus.is_empty() {
        return Err(Error::Config("pretraining corpus is empty".into()));
    }
    let mut params = ModelParams::init_random(*model_cfg, cfg.seed)?;
    let mut log = TrainingLog::default();
    if cfg.total_steps == 0 {
        return Ok((params, log));
    }
    cfg.validate()?;
    let decay = params.layout().decay_mask();
    let mut state = AdamState::new(params.len());
    let mut sampler = EpochSampler::new((0..corpus.len()).collect(), cfg.seed ^ 0x3A5C);
    let mut mask_rng = SplitMix64::derive(cfg.seed, 0x3A5D);
    let dropout = model_cfg.dropout > 0.0;
    for step in 0..cfg.total_steps {
        let batch: Vec<MaskedPrompt> = sampler
            .next_batch(cfg.batch_size)
            .into_iter()
            .map(|i| mask_prompt(&corpus[i], &mut mask_rng, false))
            .collect();
        if batch.iter().all(|m| m.positions.is_empty()) {
            return Err(Error::Config("pretraining corpus contains no residues".into()));
        }
        let drop_seed = dropout.then(|| SplitMix64::derive(cfg.seed, 0xD00D ^ step as u64).next_u64());
        let (loss, mut grads) = mlm_loss_and_grad(&params, &batch, drop_seed)?;
        let grad_norm = clip_gradients(&mut grads, cfg.clip_norm);
        let lr = lr_at(step + 1, cfg)?;
        adamw_step(&mut params.values, &grads, &mut state, lr, &decay, cfg)?;
        log.entries.push(LogEntry { step: step + 1, lr, loss, grad_norm });
    }
    Ok((params, log))
}
