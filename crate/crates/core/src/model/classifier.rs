use rayon::prelude::*;

use super::encoder::{encode, encode_backward};
use super::params::ModelParams;
use super::vocab::PairPrompt;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

fn cls_logit(params: &ModelParams, prompt: &PairPrompt, rng: Option<&mut SplitMix64>) -> Result<(f64, super::encoder::EncoderCache, Vec<f64>)> {
    let (hidden, cache) = encode(params, &prompt.tokens, &[0], rng)?;
    let layout = params.layout();
    let d = params.config().d_model;
    let w = &params.values[layout.head_w..layout.head_w + d];
    let logit = super::linalg::dot(&hidden, w) + params.values[layout.head_b];
    Ok((logit, cache, hidden))
}

/// One logit per prompt; `sigmoid(logit)` is the pair score.
pub fn forward(params: &ModelParams, batch: &[PairPrompt]) -> Result<Vec<f64>> {
    batch
        .par_iter()
        .map(|p| cls_logit(params, p, None).map(|(l, _, _)| l))
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `softplus(x) = ln(1 + eˣ)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary cross-entropy of a logit against a label.
pub fn bce_with_logit(logit: f64, label: bool) -> f64 {
    if label {
        softplus(-logit)
    } else {
        softplus(logit)
    }
}

/// Mean binary cross-entropy over the batch and its gradient with respect to
/// every parameter.
///
/// With `dropout_seed` set and a non-zero dropout rate, item `i` draws its
/// masks from stream `i` of that seed.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[PairPrompt],
    labels: &[bool],
    dropout_seed: Option<u64>,
) -> Result<(f64, Vec<f64>)> {
    if batch.len() != labels.len() {
        return Err(Error::Config(format!("{} prompts but {} labels", batch.len(), labels.len())));
    }
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let n = batch.len() as f64;
    let layout = params.layout();
    let d = params.config().d_model;
    let per_item: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .zip(labels.par_iter())
        .enumerate()
        .map(|(i, (prompt, &label))| {
            let mut rng = dropout_seed.map(|s| SplitMix64::derive(s, i as u64));
            let (logit, cache, hidden) = cls_logit(params, prompt, rng.as_mut())?;
            let y = if label { 1.0 } else { 0.0 };
            let dlogit = (sigmoid(logit) - y) / n;
            let mut grads = vec![0.0; params.len()];
            let hw = &params.values[layout.head_w..layout.head_w + d];
            for j in 0..d {
                grads[layout.head_w + j] = dlogit * hidden[j];
            }
            grads[layout.head_b] = dlogit;
            let d_hidden: Vec<f64> = hw.iter().map(|w| w * dlogit).collect();
            encode_backward(params, &cache, &d_hidden, &mut grads);
            Ok((bce_with_logit(logit, label) / n, grads))
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

/// Pair scores in `[0, 1]`, evaluated `batch_size` prompts at a time.
pub fn predict(params: &ModelParams, prompts: &[PairPrompt], batch_size: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(prompts.len());
    for chunk in prompts.chunks(batch_size.max(1)) {
        out.extend(forward(params, chunk)?.into_iter().map(sigmoid));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelConfig;
    use crate::model::vocab::{tokenize_parts, Vocabulary};

    fn tiny() -> ModelConfig {
        ModelConfig { d_model: 8, n_layers: 1, n_heads: 2, d_ff: 16, max_input_len: 64, dropout: 0.0 }
    }

    fn prompts() -> Vec<PairPrompt> {
        let v = Vocabulary;
        vec![
            tokenize_parts(b"ACDW", b"KLM", b"GHWYY", &v, 64).unwrap(),
            tokenize_parts(b"QRS", b"TVWY", b"ACDEFG", &v, 64).unwrap(),
            tokenize_parts(b"M", b"NP", b"X", &v, 64).unwrap(),
        ]
    }

    #[test]
    fn zero_head_scores_half() {
        let mut p = ModelParams::init_random(tiny(), 3).unwrap();
        p.zero_head();
        assert!(forward(&p, &prompts()).unwrap().iter().all(|&l| l == 0.0));
        assert!(predict(&p, &prompts(), 2).unwrap().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn closed_form_losses() {
        assert!((bce_with_logit(0.0, true) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_with_logit(40.0, true) < 1e-17);
        assert!(bce_with_logit(-40.0, false) < 1e-17);
        assert!((bce_with_logit(800.0, false) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn batch_order_and_padding_invariance() {
        let p = ModelParams::init_random(tiny(), 5).unwrap();
        let b = prompts();
        let base = forward(&p, &b).unwrap();
        let rev: Vec<PairPrompt> = b.iter().rev().cloned().collect();
        let mut back = forward(&p, &rev).unwrap();
        back.reverse();
        assert_eq!(base, back);
        let padded: Vec<PairPrompt> = b.iter().map(|x| x.padded(40)).collect();
        assert_eq!(base, forward(&p, &padded).unwrap());
        for (i, x) in b.iter().enumerate() {
            assert_eq!(forward(&p, std::slice::from_ref(x)).unwrap()[0], base[i]);
        }
    }

    #[test]
    fn head_bias_shift_is_uniform() {
        let mut p = ModelParams::init_random(tiny(), 9).unwrap();
        let b = prompts();
        let before = forward(&p, &b).unwrap();
        let hb = p.layout().head_b;
        p.values[hb] += 0.75;
        let after = forward(&p, &b).unwrap();
        for (x, y) in before.iter().zip(&after) {
            assert!((y - x - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn golden_logits() {
        let p = ModelParams::init_random(tiny(), 42).unwrap();
        let logits = forward(&p, &prompts()).unwrap();
        // Recorded from this implementation; guards against silent numeric drift.
        let golden = [1.059479762051433, 1.0929451052086958, 0.8996181334719175];
        for (l, g) in logits.iter().zip(golden) {
            assert!((l - g).abs() < 1e-12, "{logits:?}");
        }
    }

    #[test]
    fn rejects_mismatched_labels() {
        let p = ModelParams::init_random(tiny(), 1).unwrap();
        assert!(loss_and_grad(&p, &prompts(), &[true], None).is_err());
    }
}
