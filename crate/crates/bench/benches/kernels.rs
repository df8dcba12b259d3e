use abag_core::identity::{identity_bytes, AlignParams};
use abag_core::metrics::{auprc, auroc, ScoredLabels};
use abag_core::model::{forward, tokenize_parts, ModelConfig, ModelParams, PairPrompt, Vocabulary};
use abag_core::SplitMix64;
use criterion::{black_box, criterion_group, criterion_main, Criterion};

const RESIDUES: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";

fn random_seq(rng: &mut SplitMix64, len: usize) -> Vec<u8> {
    (0..len).map(|_| RESIDUES[rng.below(RESIDUES.len())]).collect()
}

fn metrics(c: &mut Criterion) {
    let mut rng = SplitMix64::new(1);
    let scores: Vec<f64> = (0..5000).map(|_| rng.next_f64()).collect();
    let labels: Vec<bool> = (0..5000).map(|_| rng.bernoulli(0.3)).collect();
    let s = ScoredLabels::new(scores, labels).unwrap();
    c.bench_function("auroc_n5000", |b| b.iter(|| auroc(black_box(&s)).unwrap()));
    c.bench_function("auprc_n5000", |b| b.iter(|| auprc(black_box(&s)).unwrap()));
}

fn alignment(c: &mut Criterion) {
    let mut rng = SplitMix64::new(2);
    let a = random_seq(&mut rng, 230);
    let b = random_seq(&mut rng, 230);
    let params = AlignParams::default();
    c.bench_function("identity_230x230", |bench| {
        bench.iter(|| identity_bytes(black_box(&a), black_box(&b), &params))
    });
}

fn model_forward(c: &mut Criterion) {
    let mut rng = SplitMix64::new(3);
    let cfg = ModelConfig { d_model: 16, n_layers: 2, n_heads: 2, d_ff: 32, max_input_len: 128, dropout: 0.0 };
    let params = ModelParams::init_random(cfg, 0).unwrap();
    let vocab = Vocabulary;
    let batch: Vec<PairPrompt> = (0..8)
        .map(|_| {
            let (h, l, g) = (random_seq(&mut rng, 20), random_seq(&mut rng, 16), random_seq(&mut rng, 24));
            tokenize_parts(&h, &l, &g, &vocab, 128).unwrap()
        })
        .collect();
    c.bench_function("forward_batch8_len64", |b| b.iter(|| forward(&params, black_box(&batch)).unwrap()));
}

criterion_group!(benches, metrics, alignment, model_forward);
criterion_main!(benches);
