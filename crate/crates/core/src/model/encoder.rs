//! Pre-norm transformer encoder with hand-written backward pass.
//!
//! ```text
//! x₀ = √d · E[token] + PE[position]
//! xₗ₊₁ = xₗ + Attn(LN₁(xₗ));  xₗ₊₁ ← xₗ₊₁ + FFN(LN₂(xₗ₊₁))
//! h = LN_f(x_L)
//! ```
//!
//! Only rows that feed an output are computed in the last layer: the CLS row
//! for classification, the masked positions for the masked-token objective.
//! Trailing `PAD` tokens are dropped before encoding, which is equivalent to
//! masking them out as attention keys.

use super::linalg::{add_rows, axpy, dot, matmul_add, matmul_at_add, matmul_bt_add, sum_rows_add};
use super::params::{LayerOffsets, ModelParams};
use super::vocab::{TokenId, PAD};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_A: f64 = 0.044_715;

/// Sinusoidal position table of `len × d`.
pub fn position_table(len: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; len * d];
    for pos in 0..len {
        for i in (0..d).step_by(2) {
            let angle = pos as f64 / 10_000f64.powf(i as f64 / d as f64);
            pe[pos * d + i] = angle.sin();
            if i + 1 < d {
                pe[pos * d + i + 1] = angle.cos();
            }
        }
    }
    pe
}

#[inline]
fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

#[inline]
fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

struct Norm {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &[f64], d: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, Norm) {
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = s;
        for j in 0..d {
            let h = (row[j] - mean) * s;
            xhat[r * d + j] = h;
            y[r * d + j] = g[j] * h + b[j];
        }
    }
    (y, Norm { xhat, rstd })
}

/// Accumulates into `dx`, `dg` and `db`.
fn layer_norm_backward(dy: &[f64], norm: &Norm, d: usize, g: &[f64], dx: &mut [f64], dg: &mut [f64], db: &mut [f64]) {
    let rows = norm.rstd.len();
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &norm.xhat[r * d..(r + 1) * d];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        let s = norm.rstd[r];
        let dxr = &mut dx[r * d..(r + 1) * d];
        for j in 0..d {
            dxr[j] += s * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
}

fn dropout_mask(rng: Option<&mut SplitMix64>, p: f64, len: usize) -> Option<Vec<f64>> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some((0..len).map(|_| if rng.bernoulli(p) { 0.0 } else { keep }).collect())
}

struct LayerCache {
    /// Query rows computed in this layer; `None` means all rows in order.
    rows: Option<Vec<usize>>,
    ln1: Norm,
    a1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    ctx: Vec<f64>,
    attn_mask: Option<Vec<f64>>,
    ln2: Norm,
    a2: Vec<f64>,
    u: Vec<f64>,
    act: Vec<f64>,
    ffn_mask: Option<Vec<f64>>,
}

/// Activations retained for the backward pass of one sequence.
pub struct EncoderCache {
    tokens: Vec<TokenId>,
    layers: Vec<LayerCache>,
    lnf: Norm,
}

impl EncoderCache {
    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }
}

struct Dims {
    d: usize,
    f: usize,
    h: usize,
    dh: usize,
}

fn gather_rows(x: &[f64], d: usize, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        out.extend_from_slice(&x[r * d..(r + 1) * d]);
    }
    out
}

fn layer_forward(
    w: &[f64],
    o: &LayerOffsets,
    dims: &Dims,
    x: &[f64],
    rows: Option<&[usize]>,
    dropout: f64,
    mut rng: Option<&mut SplitMix64>,
) -> (Vec<f64>, LayerCache) {
    let Dims { d, f, h, dh } = *dims;
    let t = x.len() / d;
    let (a1, ln1) = layer_norm(x, d, &w[o.ln1_g..o.ln1_g + d], &w[o.ln1_b..o.ln1_b + d]);

    let mut k = vec![0.0; t * d];
    matmul_add(&a1, t, d, &w[o.wk..o.wk + d * d], d, &mut k);
    add_rows(&mut k, &w[o.bk..o.bk + d]);
    let mut v = vec![0.0; t * d];
    matmul_add(&a1, t, d, &w[o.wv..o.wv + d * d], d, &mut v);
    add_rows(&mut v, &w[o.bv..o.bv + d]);

    let aq_owned;
    let (aq, x_rows_owned) = match rows {
        Some(r) => {
            aq_owned = gather_rows(&a1, d, r);
            (&aq_owned[..], Some(gather_rows(x, d, r)))
        }
        None => (&a1[..], None),
    };
    let xr: &[f64] = x_rows_owned.as_deref().unwrap_or(x);
    let r_n = aq.len() / d;
    let mut q = vec![0.0; r_n * d];
    matmul_add(aq, r_n, d, &w[o.wq..o.wq + d * d], d, &mut q);
    add_rows(&mut q, &w[o.bq..o.bq + d]);

    let scale = 1.0 / (dh as f64).sqrt();
    let mut probs = vec![0.0; h * r_n * t];
    let mut ctx = vec![0.0; r_n * d];
    for head in 0..h {
        let off = head * dh;
        for i in 0..r_n {
            let qi = &q[i * d + off..i * d + off + dh];
            let prow = &mut probs[(head * r_n + i) * t..(head * r_n + i + 1) * t];
            let mut max = f64::NEG_INFINITY;
            for j in 0..t {
                let s = dot(qi, &k[j * d + off..j * d + off + dh]) * scale;
                prow[j] = s;
                max = max.max(s);
            }
            let mut z = 0.0;
            for p in prow.iter_mut() {
                *p = (*p - max).exp();
                z += *p;
            }
            let inv = 1.0 / z;
            let crow = &mut ctx[i * d + off..i * d + off + dh];
            for j in 0..t {
                prow[j] *= inv;
                axpy(prow[j], &v[j * d + off..j * d + off + dh], crow);
            }
        }
    }

    let mut attn = vec![0.0; r_n * d];
    matmul_add(&ctx, r_n, d, &w[o.wo..o.wo + d * d], d, &mut attn);
    add_rows(&mut attn, &w[o.bo..o.bo + d]);
    let attn_mask = dropout_mask(rng.as_deref_mut(), dropout, attn.len());
    if let Some(m) = &attn_mask {
        attn.iter_mut().zip(m).for_each(|(a, m)| *a *= m);
    }
    let mut x_mid: Vec<f64> = xr.iter().zip(&attn).map(|(a, b)| a + b).collect();

    let (a2, ln2) = layer_norm(&x_mid, d, &w[o.ln2_g..o.ln2_g + d], &w[o.ln2_b..o.ln2_b + d]);
    let mut u = vec![0.0; r_n * f];
    matmul_add(&a2, r_n, d, &w[o.w1..o.w1 + d * f], f, &mut u);
    add_rows(&mut u, &w[o.b1..o.b1 + f]);
    let act: Vec<f64> = u.iter().map(|&x| gelu(x)).collect();
    let mut ffn = vec![0.0; r_n * d];
    matmul_add(&act, r_n, f, &w[o.w2..o.w2 + f * d], d, &mut ffn);
    add_rows(&mut ffn, &w[o.b2..o.b2 + d]);
    let ffn_mask = dropout_mask(rng, dropout, ffn.len());
    if let Some(m) = &ffn_mask {
        ffn.iter_mut().zip(m).for_each(|(a, m)| *a *= m);
    }
    x_mid.iter_mut().zip(&ffn).for_each(|(a, b)| *a += b);

    (
        x_mid,
        LayerCache {
            rows: rows.map(|r| r.to_vec()),
            ln1,
            a1,
            q,
            k,
            v,
            probs,
            ctx,
            attn_mask,
            ln2,
            a2,
            u,
            act,
            ffn_mask,
        },
    )
}

/// Returns `d_x` for the layer input (all `t` rows), accumulating weight grads.
fn layer_backward(w: &[f64], o: &LayerOffsets, dims: &Dims, c: &LayerCache, d_out: &[f64], grads: &mut [f64]) -> Vec<f64> {
    let Dims { d, f, h, dh } = *dims;
    let t = c.k.len() / d;
    let r_n = c.q.len() / d;

    // FFN branch.
    let mut d_ffn = d_out.to_vec();
    if let Some(m) = &c.ffn_mask {
        d_ffn.iter_mut().zip(m).for_each(|(a, m)| *a *= m);
    }
    matmul_at_add(&c.act, r_n, f, &d_ffn, d, &mut grads[o.w2..o.w2 + f * d]);
    sum_rows_add(&d_ffn, &mut grads[o.b2..o.b2 + d]);
    let mut d_u = vec![0.0; r_n * f];
    matmul_bt_add(&d_ffn, r_n, d, &w[o.w2..o.w2 + f * d], f, &mut d_u);
    d_u.iter_mut().zip(&c.u).for_each(|(g, &u)| *g *= gelu_grad(u));
    matmul_at_add(&c.a2, r_n, d, &d_u, f, &mut grads[o.w1..o.w1 + d * f]);
    sum_rows_add(&d_u, &mut grads[o.b1..o.b1 + f]);
    let mut d_a2 = vec![0.0; r_n * d];
    matmul_bt_add(&d_u, r_n, f, &w[o.w1..o.w1 + d * f], d, &mut d_a2);

    let mut d_mid = d_out.to_vec();
    {
        let (lo, hi) = grads.split_at_mut(o.ln2_b);
        layer_norm_backward(
            &d_a2,
            &c.ln2,
            d,
            &w[o.ln2_g..o.ln2_g + d],
            &mut d_mid,
            &mut lo[o.ln2_g..o.ln2_g + d],
            &mut hi[..d],
        );
    }

    // Attention branch.
    let mut d_attn = d_mid.clone();
    if let Some(m) = &c.attn_mask {
        d_attn.iter_mut().zip(m).for_each(|(a, m)| *a *= m);
    }
    matmul_at_add(&c.ctx, r_n, d, &d_attn, d, &mut grads[o.wo..o.wo + d * d]);
    sum_rows_add(&d_attn, &mut grads[o.bo..o.bo + d]);
    let mut d_ctx = vec![0.0; r_n * d];
    matmul_bt_add(&d_attn, r_n, d, &w[o.wo..o.wo + d * d], d, &mut d_ctx);

    let scale = 1.0 / (dh as f64).sqrt();
    let mut d_q = vec![0.0; r_n * d];
    let mut d_k = vec![0.0; t * d];
    let mut d_v = vec![0.0; t * d];
    let mut d_s = vec![0.0; t];
    for head in 0..h {
        let off = head * dh;
        for i in 0..r_n {
            let prow = &c.probs[(head * r_n + i) * t..(head * r_n + i + 1) * t];
            let dci = &d_ctx[i * d + off..i * d + off + dh];
            let mut weighted = 0.0;
            for j in 0..t {
                let dp = dot(dci, &c.v[j * d + off..j * d + off + dh]);
                d_s[j] = dp;
                weighted += dp * prow[j];
                axpy(prow[j], dci, &mut d_v[j * d + off..j * d + off + dh]);
            }
            let qi = &c.q[i * d + off..i * d + off + dh];
            let dqi_start = i * d + off;
            for j in 0..t {
                let ds = prow[j] * (d_s[j] - weighted) * scale;
                if ds != 0.0 {
                    axpy(ds, &c.k[j * d + off..j * d + off + dh], &mut d_q[dqi_start..dqi_start + dh]);
                    axpy(ds, qi, &mut d_k[j * d + off..j * d + off + dh]);
                }
            }
        }
    }

    let mut d_a1 = vec![0.0; t * d];
    matmul_at_add(&c.a1, t, d, &d_k, d, &mut grads[o.wk..o.wk + d * d]);
    sum_rows_add(&d_k, &mut grads[o.bk..o.bk + d]);
    matmul_bt_add(&d_k, t, d, &w[o.wk..o.wk + d * d], d, &mut d_a1);
    matmul_at_add(&c.a1, t, d, &d_v, d, &mut grads[o.wv..o.wv + d * d]);
    sum_rows_add(&d_v, &mut grads[o.bv..o.bv + d]);
    matmul_bt_add(&d_v, t, d, &w[o.wv..o.wv + d * d], d, &mut d_a1);

    let mut d_x = vec![0.0; t * d];
    match &c.rows {
        None => {
            matmul_at_add(&c.a1, t, d, &d_q, d, &mut grads[o.wq..o.wq + d * d]);
            sum_rows_add(&d_q, &mut grads[o.bq..o.bq + d]);
            matmul_bt_add(&d_q, t, d, &w[o.wq..o.wq + d * d], d, &mut d_a1);
            d_x.copy_from_slice(&d_mid);
        }
        Some(rows) => {
            let aq = gather_rows(&c.a1, d, rows);
            matmul_at_add(&aq, r_n, d, &d_q, d, &mut grads[o.wq..o.wq + d * d]);
            sum_rows_add(&d_q, &mut grads[o.bq..o.bq + d]);
            let mut d_aq = vec![0.0; r_n * d];
            matmul_bt_add(&d_q, r_n, d, &w[o.wq..o.wq + d * d], d, &mut d_aq);
            for (i, &r) in rows.iter().enumerate() {
                axpy(1.0, &d_aq[i * d..(i + 1) * d], &mut d_a1[r * d..(r + 1) * d]);
                axpy(1.0, &d_mid[i * d..(i + 1) * d], &mut d_x[r * d..(r + 1) * d]);
            }
        }
    }

    let (lo, hi) = grads.split_at_mut(o.ln1_b);
    layer_norm_backward(&d_a1, &c.ln1, d, &w[o.ln1_g..o.ln1_g + d], &mut d_x, &mut lo[o.ln1_g..o.ln1_g + d], &mut hi[..d]);
    d_x
}

fn check_finite(values: &[f64], layer: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric { layer })
    }
}

/// Encodes one prompt and returns the final-norm hidden states of
/// `out_rows` (row-major, `out_rows.len() × d_model`).
///
/// `dropout_rng` enables dropout when the configuration has a non-zero rate.
pub fn encode(
    params: &ModelParams,
    tokens: &[TokenId],
    out_rows: &[usize],
    dropout_rng: Option<&mut SplitMix64>,
) -> Result<(Vec<f64>, EncoderCache)> {
    let cfg = params.config();
    let layout = params.layout();
    let w = &params.values;
    let d = cfg.d_model;
    let dims = Dims {
        d,
        f: cfg.d_ff,
        h: cfg.n_heads,
        dh: cfg.head_dim(),
    };
    let end = tokens.iter().position(|&t| t == PAD).unwrap_or(tokens.len());
    let tokens = &tokens[..end];
    let t = tokens.len();
    if t == 0 {
        return Err(Error::Config("cannot encode an empty prompt".into()));
    }
    if t > cfg.max_input_len {
        return Err(Error::Config(format!("prompt of {t} tokens exceeds max_input_len {}", cfg.max_input_len)));
    }
    if let Some(&r) = out_rows.iter().find(|&&r| r >= t) {
        return Err(Error::Config(format!("output row {r} outside prompt of {t} tokens")));
    }

    let pe = position_table(t, d);
    let emb_scale = (d as f64).sqrt();
    let mut x = pe;
    for (pos, &tok) in tokens.iter().enumerate() {
        let e = &w[layout.tok_emb + tok as usize * d..layout.tok_emb + (tok as usize + 1) * d];
        axpy(emb_scale, e, &mut x[pos * d..(pos + 1) * d]);
    }

    let mut rng = dropout_rng;
    let n_layers = layout.layers.len();
    let mut caches = Vec::with_capacity(n_layers);
    for (l, o) in layout.layers.iter().enumerate() {
        let rows = (l + 1 == n_layers).then_some(out_rows);
        let (next, cache) = layer_forward(w, o, &dims, &x, rows, cfg.dropout, rng.as_deref_mut());
        check_finite(&next, l)?;
        x = next;
        caches.push(cache);
    }
    let (hidden, lnf) = layer_norm(&x, d, &w[layout.lnf_g..layout.lnf_g + d], &w[layout.lnf_b..layout.lnf_b + d]);
    check_finite(&hidden, n_layers.saturating_sub(1))?;
    Ok((
        hidden,
        EncoderCache {
            tokens: tokens.to_vec(),
            layers: caches,
            lnf,
        },
    ))
}

/// Back-propagates `d_hidden` (gradient w.r.t. [`encode`]'s output) into `grads`.
pub fn encode_backward(params: &ModelParams, cache: &EncoderCache, d_hidden: &[f64], grads: &mut [f64]) {
    let cfg = params.config();
    let layout = params.layout();
    let w = &params.values;
    let d = cfg.d_model;
    let dims = Dims {
        d,
        f: cfg.d_ff,
        h: cfg.n_heads,
        dh: cfg.head_dim(),
    };

    let mut dx = vec![0.0; d_hidden.len()];
    {
        let (lo, hi) = grads.split_at_mut(layout.lnf_b);
        layer_norm_backward(
            d_hidden,
            &cache.lnf,
            d,
            &w[layout.lnf_g..layout.lnf_g + d],
            &mut dx,
            &mut lo[layout.lnf_g..layout.lnf_g + d],
            &mut hi[..d],
        );
    }
    for (o, c) in layout.layers.iter().zip(&cache.layers).rev() {
        dx = layer_backward(w, o, &dims, c, &dx, grads);
    }
    let emb_scale = (d as f64).sqrt();
    for (pos, &tok) in cache.tokens.iter().enumerate() {
        let start = layout.tok_emb + tok as usize * d;
        axpy(emb_scale, &dx[pos * d..(pos + 1) * d], &mut grads[start..start + d]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_differences() {
        for &u in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let fd = (gelu(u + 1e-6) - gelu(u - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn position_table_first_rows() {
        let pe = position_table(3, 4);
        assert_eq!(&pe[..4], &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe[4] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[6] - (1.0 / 100.0f64).sin()).abs() < 1e-15);
    }
}
