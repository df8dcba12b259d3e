//! Transformer pair classifier: tokenization, encoder, objectives, optimizer
//! and training loops.

mod checkpoint;
mod classifier;
mod encoder;
mod linalg;
mod optim;
mod params;
mod pretrain;
mod train;
mod vocab;

pub use checkpoint::{checkpoint_from_json, checkpoint_to_json, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use classifier::{bce_with_logit, forward, loss_and_grad, predict, sigmoid};
pub use encoder::{encode, position_table};
pub use optim::{adamw_step, clip_gradients, global_norm, lr_at, AdamState, TrainingConfig};
pub use params::{LayerOffsets, Layout, ModelConfig, ModelParams, TensorKind, TensorSpec};
pub use pretrain::{mask_prompt, mlm_accuracy, mlm_loss_and_grad, pretrain_mlm, sequence_corpus, MaskedPrompt, MASK_RATE};
pub use train::{fit, task_prompts, train, EpochSampler, Init, LogEntry, TrainedFold, TrainingLog};
pub use vocab::{
    tokenize_pair, tokenize_parts, PairPrompt, TokenId, Vocabulary, AB_HC, AB_LC, AG, CLS, FIRST_RESIDUE, MASK,
    N_RESIDUES, PAD, VOCAB_SIZE,
};

#[cfg(test)]
mod gradient_tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn tiny(layers: usize) -> ModelConfig {
        ModelConfig { d_model: 8, n_layers: layers, n_heads: 2, d_ff: 16, max_input_len: 64, dropout: 0.0 }
    }

    fn prompts() -> Vec<PairPrompt> {
        let v = Vocabulary;
        vec![
            tokenize_parts(b"ACDWY", b"KLM", b"GHWYYC", &v, 64).unwrap(),
            tokenize_parts(b"QRS", b"TVWY", b"ACDEFG", &v, 64).unwrap(),
        ]
    }

    /// Perturbs every parameter and compares with central differences.
    fn check(params: &ModelParams, f: impl Fn(&ModelParams) -> (f64, Vec<f64>)) -> f64 {
        let (_, g) = f(params);
        let eps = 1e-4;
        let mut worst = 0.0f64;
        let mut p = params.clone();
        for i in 0..p.len() {
            let orig = p.values[i];
            p.values[i] = orig + eps;
            let lp = f(&p).0;
            p.values[i] = orig - eps;
            let lm = f(&p).0;
            p.values[i] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            let err = (fd - g[i]).abs() / (fd.abs() + g[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        worst
    }

    fn perturbed(cfg: ModelConfig, seed: u64) -> ModelParams {
        let mut p = ModelParams::init_random(cfg, seed).unwrap();
        let mut rng = SplitMix64::new(seed ^ 99);
        for v in &mut p.values {
            *v += rng.uniform(-0.1, 0.1);
        }
        p
    }

    #[test]
    fn classifier_gradients() {
        for layers in [1, 2] {
            let p = perturbed(tiny(layers), 7);
            let b = prompts();
            let err = check(&p, |q| loss_and_grad(q, &b, &[true, false], None).unwrap());
            assert!(err < 1e-4, "L={layers}: {err}");
        }
    }

    #[test]
    fn mlm_gradients() {
        let p = perturbed(tiny(2), 8);
        let mut rng = SplitMix64::new(5);
        let batch: Vec<MaskedPrompt> = prompts().iter().map(|x| mask_prompt(x, &mut rng, false)).collect();
        let err = check(&p, |q| mlm_loss_and_grad(q, &batch, None).unwrap());
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn dropout_gradients_with_fixed_masks() {
        let cfg = ModelConfig { dropout: 0.2, ..tiny(1) };
        let p = perturbed(cfg, 10);
        let b = prompts();
        let err = check(&p, |q| loss_and_grad(q, &b, &[false, true], Some(31)).unwrap());
        assert!(err < 1e-4, "{err}");
    }
}
