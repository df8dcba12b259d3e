use std::collections::BTreeSet;

use super::config::PretrainingConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{tokenize_pair, tokenize_parts, PairPrompt, Vocabulary};
use crate::synth::{pretraining_corpus, Complex, GroundTruth};

pub fn complex_prompts(complexes: &[Complex], max_len: usize) -> Result<Vec<PairPrompt>> {
    let vocab = Vocabulary;
    complexes
        .iter()
        .map(|(h, l, a)| tokenize_parts(h, l, a, &vocab, max_len))
        .collect()
}

/// Fresh rule-following complexes for a synthetic benchmark.
pub fn synthetic_corpus(truth: &GroundTruth, cfg: &PretrainingConfig) -> Result<Vec<PairPrompt>> {
    let complexes = pretraining_corpus(&truth.rule, &truth.config, cfg.corpus_size, cfg.corpus_seed);
    complex_prompts(&complexes, cfg.corpus_max_len)
}

/// One prompt per distinct assayed (antibody, antigen) pair. Labels are not
/// used, only the sequences.
pub fn dataset_corpus(dataset: &Dataset, max_len: usize) -> Result<Vec<PairPrompt>> {
    let vocab = Vocabulary;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for pair in dataset.pairs() {
        if !seen.insert((pair.antibody_id.as_str(), pair.antigen_id.as_str())) {
            continue;
        }
        let ab = dataset.antibody(&pair.antibody_id).ok_or_else(|| Error::Lookup(pair.antibody_id.clone()))?;
        let ag = dataset.antigen(&pair.antigen_id).ok_or_else(|| Error::Lookup(pair.antigen_id.clone()))?;
        out.push(tokenize_pair(ab, ag, &vocab, max_len)?);
    }
    Ok(out)
}
