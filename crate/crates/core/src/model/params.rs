use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::vocab::{N_RESIDUES, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_input_len: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            max_input_len: 900,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.d_ff == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_input_len < 8 {
            return Err(Error::Config("max_input_len must be at least 8".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Flat offsets of one encoder layer's tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Kind of a parameter tensor, which decides initialization and decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Embedding,
    Weight,
    Bias,
    NormGain,
    NormBias,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub range: Range<usize>,
    /// `(fan_in, fan_out)` for matrices, `(len, 1)` for vectors.
    pub shape: (usize, usize),
    pub kind: TensorKind,
}

impl TensorSpec {
    pub fn decays(&self) -> bool {
        matches!(self.kind, TensorKind::Embedding | TensorKind::Weight)
    }
}

/// Position of every tensor inside the flat parameter vector.
///
/// Order: token embedding, layers (LN1, Q, K, V, O, LN2, FFN in, FFN out),
/// final LN, classification head, masked-token output bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tok_emb: usize,
    pub layers: Vec<LayerOffsets>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub head_w: usize,
    pub head_b: usize,
    pub mlm_bias: usize,
    pub total: usize,
    pub tensors: Vec<TensorSpec>,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let f = cfg.d_ff;
        let mut tensors = Vec::new();
        let mut cursor = 0usize;
        let mut add = |name: String, shape: (usize, usize), kind: TensorKind| {
            let start = cursor;
            cursor += shape.0 * shape.1;
            tensors.push(TensorSpec {
                name,
                range: start..cursor,
                shape,
                kind,
            });
            start
        };
        let tok_emb = add("tok_emb".into(), (VOCAB_SIZE, d), TensorKind::Embedding);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            layers.push(LayerOffsets {
                ln1_g: add(p("ln1_g"), (d, 1), TensorKind::NormGain),
                ln1_b: add(p("ln1_b"), (d, 1), TensorKind::NormBias),
                wq: add(p("wq"), (d, d), TensorKind::Weight),
                bq: add(p("bq"), (d, 1), TensorKind::Bias),
                wk: add(p("wk"), (d, d), TensorKind::Weight),
                bk: add(p("bk"), (d, 1), TensorKind::Bias),
                wv: add(p("wv"), (d, d), TensorKind::Weight),
                bv: add(p("bv"), (d, 1), TensorKind::Bias),
                wo: add(p("wo"), (d, d), TensorKind::Weight),
                bo: add(p("bo"), (d, 1), TensorKind::Bias),
                ln2_g: add(p("ln2_g"), (d, 1), TensorKind::NormGain),
                ln2_b: add(p("ln2_b"), (d, 1), TensorKind::NormBias),
                w1: add(p("w1"), (d, f), TensorKind::Weight),
                b1: add(p("b1"), (f, 1), TensorKind::Bias),
                w2: add(p("w2"), (f, d), TensorKind::Weight),
                b2: add(p("b2"), (d, 1), TensorKind::Bias),
            });
        }
        let lnf_g = add("lnf_g".into(), (d, 1), TensorKind::NormGain);
        let lnf_b = add("lnf_b".into(), (d, 1), TensorKind::NormBias);
        let head_w = add("head_w".into(), (d, 1), TensorKind::Weight);
        let head_b = add("head_b".into(), (1, 1), TensorKind::Bias);
        let mlm_bias = add("mlm_bias".into(), (N_RESIDUES, 1), TensorKind::Bias);
        Layout {
            tok_emb,
            layers,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
            mlm_bias,
            total: cursor,
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn head_range(&self) -> Range<usize> {
        self.head_w..self.head_b + 1
    }

    /// `true` for entries that receive decoupled weight decay.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for t in &self.tensors {
            if t.decays() {
                mask[t.range.clone()].fill(true);
            }
        }
        mask
    }
}

/// All trainable weights in one flat vector, interpreted through [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    layout: Layout,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        Ok(Self {
            values: vec![0.0; layout.total],
            config,
            layout,
        })
    }

    /// Xavier-uniform matrices and embeddings, zero biases, unit norm gains.
    pub fn init_random(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = SplitMix64::derive(seed, 0x1417);
        for t in p.layout.tensors.clone() {
            let slice = &mut p.values[t.range.clone()];
            match t.kind {
                TensorKind::Embedding | TensorKind::Weight => {
                    let bound = (6.0 / (t.shape.0 + t.shape.1) as f64).sqrt();
                    for v in slice.iter_mut() {
                        *v = rng.uniform(-bound, bound);
                    }
                }
                TensorKind::NormGain => slice.fill(1.0),
                TensorKind::Bias | TensorKind::NormBias => slice.fill(0.0),
            }
        }
        Ok(p)
    }

    pub fn from_values(config: ModelConfig, values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if values.len() != p.values.len() {
            return Err(Error::Config(format!(
                "expected {} parameters for this configuration, got {}",
                p.values.len(),
                values.len()
            )));
        }
        p.values = values;
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Re-draws the classification head from `seed`, keeping everything else.
    pub fn reinit_head(&mut self, seed: u64) {
        let mut rng = SplitMix64::derive(seed, 0x4EAD);
        let d = self.config.d_model;
        let bound = (6.0 / (d + 1) as f64).sqrt();
        let w = self.layout.head_w;
        for v in &mut self.values[w..w + d] {
            *v = rng.uniform(-bound, bound);
        }
        self.values[self.layout.head_b] = 0.0;
    }

    pub fn zero_head(&mut self) {
        let r = self.layout.head_range();
        self.values[r].fill(0.0);
    }
}
