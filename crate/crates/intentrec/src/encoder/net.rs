//! Forward pass, reverse-mode gradients, and tied-embedding scoring.
//!
//! Attention is causal (a position attends only to itself and earlier
//! positions) and padding slots are excluded as keys for every query, so a
//! valid position's hidden state depends only on the valid items at or
//! before it. Positional rows are anchored to the right edge of the
//! `max_len` window, which makes the final representation independent of
//! how much left padding a sequence carries.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::EncoderParams;
use crate::error::{Error, Result};
use crate::seqprep::PaddedSequence;

const LN_EPS: f64 = 1e-8;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Final hidden states of one encoded sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEncoding {
    /// Row-major `seq_len x d` matrix of last-layer hidden states.
    pub hidden_states: Vec<f64>,
    pub seq_len: usize,
    /// Hidden state at the last valid slot; the sequence representation.
    pub final_repr: Vec<f64>,
    pub last_valid: usize,
}

struct NormTape {
    xhat: Vec<f64>,
    istd: Vec<f64>,
}

struct LayerTape {
    norm1: NormTape,
    y1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,
    ctx: Vec<f64>,
    drop_attn: Option<Vec<f64>>,
    norm2: NormTape,
    y2: Vec<f64>,
    ffn_pre: Vec<f64>,
    ffn_act: Vec<f64>,
    drop_ffn: Option<Vec<f64>>,
}

/// Recorded forward pass; everything `backward` needs.
pub struct ForwardPass {
    slots: Vec<u32>,
    valid: Vec<bool>,
    pos_base: usize,
    d: usize,
    drop_emb: Option<Vec<f64>>,
    layers: Vec<LayerTape>,
    hidden: Vec<f64>,
    seq_len: usize,
    last_valid: usize,
}

impl ForwardPass {
    pub fn final_repr(&self) -> &[f64] {
        &self.hidden[self.last_valid * self.d..(self.last_valid + 1) * self.d]
    }

    pub fn last_valid(&self) -> usize {
        self.last_valid
    }

    pub fn into_encoding(self) -> SequenceEncoding {
        let final_repr = self.final_repr().to_vec();
        SequenceEncoding {
            hidden_states: self.hidden,
            seq_len: self.seq_len,
            final_repr,
            last_valid: self.last_valid,
        }
    }
}

/// Deterministic inference-mode encoding (no dropout).
pub fn encode(params: &EncoderParams, seq: &PaddedSequence) -> Result<SequenceEncoding> {
    Ok(run_forward(params, seq, None)?.into_encoding())
}

/// Training-mode encoding with dropout; keeps the tape for `backward`.
pub fn encode_training(
    params: &EncoderParams,
    seq: &PaddedSequence,
    rng: &mut ChaCha8Rng,
) -> Result<ForwardPass> {
    run_forward(params, seq, Some(rng))
}

fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep })
        .collect()
}

fn apply_mask(x: &mut [f64], mask: &[f64]) {
    for (v, m) in x.iter_mut().zip(mask) {
        *v *= m;
    }
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

fn gelu_prime(u: f64) -> f64 {
    let inner = GELU_C * (u + 0.044715 * u * u * u);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

/// y = x W + b for row-major x (s x d_in), w (d_in x d_out).
fn linear(x: &[f64], s: usize, d_in: usize, w: &[f64], b: &[f64], d_out: usize) -> Vec<f64> {
    let mut y = vec![0.0; s * d_out];
    for t in 0..s {
        let yr = &mut y[t * d_out..(t + 1) * d_out];
        yr.copy_from_slice(b);
        for i in 0..d_in {
            let xv = x[t * d_in + i];
            let wr = &w[i * d_out..(i + 1) * d_out];
            for o in 0..d_out {
                yr[o] += xv * wr[o];
            }
        }
    }
    y
}

/// dx += dy W^T; grads[dw] += x^T dy; grads[db] += column sums of dy.
#[allow(clippy::too_many_arguments)]
fn linear_backward(
    x: &[f64],
    dy: &[f64],
    s: usize,
    d_in: usize,
    d_out: usize,
    w: &[f64],
    grads: &mut [f64],
    dw_off: usize,
    db_off: usize,
    dx: &mut [f64],
) {
    for t in 0..s {
        let dyr = &dy[t * d_out..(t + 1) * d_out];
        for i in 0..d_in {
            let wr = &w[i * d_out..(i + 1) * d_out];
            let mut acc = 0.0;
            for o in 0..d_out {
                acc += dyr[o] * wr[o];
            }
            dx[t * d_in + i] += acc;
        }
        for i in 0..d_in {
            let xv = x[t * d_in + i];
            let gw = &mut grads[dw_off + i * d_out..dw_off + (i + 1) * d_out];
            for o in 0..d_out {
                gw[o] += xv * dyr[o];
            }
        }
        let gb = &mut grads[db_off..db_off + d_out];
        for o in 0..d_out {
            gb[o] += dyr[o];
        }
    }
}

fn layer_norm(x: &[f64], s: usize, d: usize, gain: &[f64], bias: &[f64]) -> (Vec<f64>, NormTape) {
    let mut y = vec![0.0; s * d];
    let mut xhat = vec![0.0; s * d];
    let mut istd = vec![0.0; s];
    for t in 0..s {
        let row = &x[t * d..(t + 1) * d];
        let mu = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        istd[t] = is;
        for j in 0..d {
            let xh = (row[j] - mu) * is;
            xhat[t * d + j] = xh;
            y[t * d + j] = gain[j] * xh + bias[j];
        }
    }
    (y, NormTape { xhat, istd })
}

#[allow(clippy::too_many_arguments)]
fn layer_norm_backward(
    dy: &[f64],
    tape: &NormTape,
    s: usize,
    d: usize,
    gain: &[f64],
    grads: &mut [f64],
    dgain_off: usize,
    dbias_off: usize,
    dx: &mut [f64],
) {
    for t in 0..s {
        let xhat = &tape.xhat[t * d..(t + 1) * d];
        let dyr = &dy[t * d..(t + 1) * d];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for j in 0..d {
            let dxh = dyr[j] * gain[j];
            m1 += dxh;
            m2 += dxh * xhat[j];
            grads[dgain_off + j] += dyr[j] * xhat[j];
            grads[dbias_off + j] += dyr[j];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let is = tape.istd[t];
        for j in 0..d {
            let dxh = dyr[j] * gain[j];
            dx[t * d + j] += is * (dxh - m1 - xhat[j] * m2);
        }
    }
}

/// Causal, padding-masked softmax attention. Invalid query rows get a zero
/// context vector and an all-zero attention row.
fn attention_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    s: usize,
    d: usize,
    n_heads: usize,
    valid: &[bool],
) -> (Vec<f64>, Vec<f64>) {
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ctx = vec![0.0; s * d];
    let mut attn = vec![0.0; n_heads * s * s];
    let mut scores: Vec<f64> = Vec::with_capacity(s);
    for t in 0..s {
        if !valid[t] {
            continue;
        }
        let allowed: Vec<usize> = (0..=t).filter(|&j| valid[j]).collect();
        for m in 0..n_heads {
            let c0 = m * dh;
            scores.clear();
            let mut max_score = f64::NEG_INFINITY;
            for &j in &allowed {
                let mut dot = 0.0;
                for c in 0..dh {
                    dot += q[t * d + c0 + c] * k[j * d + c0 + c];
                }
                let score = dot * scale;
                scores.push(score);
                if score > max_score {
                    max_score = score;
                }
            }
            let mut denom = 0.0;
            for score in scores.iter_mut() {
                *score = (*score - max_score).exp();
                denom += *score;
            }
            for (idx, &j) in allowed.iter().enumerate() {
                let a = scores[idx] / denom;
                attn[(m * s + t) * s + j] = a;
                for c in 0..dh {
                    ctx[t * d + c0 + c] += a * v[j * d + c0 + c];
                }
            }
        }
    }
    (ctx, attn)
}

#[allow(clippy::too_many_arguments)]
fn attention_backward(
    dctx: &[f64],
    q: &[f64],
    k: &[f64],
    v: &[f64],
    attn: &[f64],
    s: usize,
    d: usize,
    n_heads: usize,
    valid: &[bool],
    dq: &mut [f64],
    dk: &mut [f64],
    dv: &mut [f64],
) {
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut da: Vec<f64> = Vec::with_capacity(s);
    for t in 0..s {
        if !valid[t] {
            continue;
        }
        let allowed: Vec<usize> = (0..=t).filter(|&j| valid[j]).collect();
        for m in 0..n_heads {
            let c0 = m * dh;
            da.clear();
            for &j in &allowed {
                let mut dot = 0.0;
                for c in 0..dh {
                    dot += v[j * d + c0 + c] * dctx[t * d + c0 + c];
                }
                da.push(dot);
            }
            let mut mixed = 0.0;
            for (idx, &j) in allowed.iter().enumerate() {
                mixed += attn[(m * s + t) * s + j] * da[idx];
            }
            for (idx, &j) in allowed.iter().enumerate() {
                let a = attn[(m * s + t) * s + j];
                let ds = a * (da[idx] - mixed);
                for c in 0..dh {
                    dq[t * d + c0 + c] += ds * k[j * d + c0 + c] * scale;
                    dk[j * d + c0 + c] += ds * q[t * d + c0 + c] * scale;
                    dv[j * d + c0 + c] += a * dctx[t * d + c0 + c];
                }
            }
        }
    }
}

/// Input rows of the stack: item embedding plus positional row, summed per
/// slot. Positional rows are anchored to the right edge of the window
/// (slot `i` of an `s`-long sequence uses row `max_len - s + i`), so a
/// sequence keeps its positional content under extra left padding.
pub fn embed(params: &EncoderParams, seq: &PaddedSequence) -> Result<Vec<f64>> {
    let c = &params.config;
    let d = c.embedding_dim;
    let s = seq.len();
    if s == 0 || s > c.max_len {
        return Err(Error::Data(format!(
            "padded length {s} outside 1..={}",
            c.max_len
        )));
    }
    for &slot in &seq.slots {
        if slot as usize > c.n_items {
            return Err(Error::Index(format!(
                "item index {slot} exceeds catalog size {}",
                c.n_items
            )));
        }
    }
    let pos_base = c.max_len - s;
    let mut x = vec![0.0; s * d];
    for t in 0..s {
        let emb = params.item_row(seq.slots[t]);
        let pos = &params.data[params.pos_emb + (pos_base + t) * d..][..d];
        for j in 0..d {
            x[t * d + j] = emb[j] + pos[j];
        }
    }
    Ok(x)
}

fn run_forward(
    params: &EncoderParams,
    seq: &PaddedSequence,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardPass> {
    let c = &params.config;
    let d = c.embedding_dim;
    let s = seq.len();
    let last_valid = seq
        .last_valid()
        .ok_or_else(|| Error::Data("cannot encode a sequence with zero valid slots".into()))?;
    let mut x = embed(params, seq)?;
    let pos_base = c.max_len - s;
    let rate = c.dropout_rate;
    let training = rate > 0.0 && rng.is_some();
    let drop_emb = if training {
        let mask = dropout_mask(s * d, rate, rng.as_mut().unwrap());
        apply_mask(&mut x, &mask);
        Some(mask)
    } else {
        None
    };

    let mut layers = Vec::with_capacity(c.n_layers);
    for lo in &params.layers {
        let p = &params.data;
        let (y1, norm1) = layer_norm(&x, s, d, &p[lo.ln1_gain..][..d], &p[lo.ln1_bias..][..d]);
        let q = linear(&y1, s, d, &p[lo.wq..][..d * d], &p[lo.bq..][..d], d);
        let k = linear(&y1, s, d, &p[lo.wk..][..d * d], &p[lo.bk..][..d], d);
        let v = linear(&y1, s, d, &p[lo.wv..][..d * d], &p[lo.bv..][..d], d);
        let (ctx, attn) = attention_forward(&q, &k, &v, s, d, c.n_heads, &seq.valid_mask);
        let mut attn_out = linear(&ctx, s, d, &p[lo.wo..][..d * d], &p[lo.bo..][..d], d);
        let drop_attn = if training {
            let mask = dropout_mask(s * d, rate, rng.as_mut().unwrap());
            apply_mask(&mut attn_out, &mask);
            Some(mask)
        } else {
            None
        };
        for (xi, ai) in x.iter_mut().zip(&attn_out) {
            *xi += ai;
        }
        let (y2, norm2) = layer_norm(&x, s, d, &p[lo.ln2_gain..][..d], &p[lo.ln2_bias..][..d]);
        let ffn_pre = linear(&y2, s, d, &p[lo.w1..][..d * c.ffn_dim], &p[lo.b1..][..c.ffn_dim], c.ffn_dim);
        let ffn_act: Vec<f64> = ffn_pre.iter().map(|&u| gelu(u)).collect();
        let mut ffn_out = linear(
            &ffn_act,
            s,
            c.ffn_dim,
            &p[lo.w2..][..c.ffn_dim * d],
            &p[lo.b2..][..d],
            d,
        );
        let drop_ffn = if training {
            let mask = dropout_mask(s * d, rate, rng.as_mut().unwrap());
            apply_mask(&mut ffn_out, &mask);
            Some(mask)
        } else {
            None
        };
        for (xi, fi) in x.iter_mut().zip(&ffn_out) {
            *xi += fi;
        }
        layers.push(LayerTape {
            norm1,
            y1,
            q,
            k,
            v,
            attn,
            ctx,
            drop_attn,
            norm2,
            y2,
            ffn_pre,
            ffn_act,
            drop_ffn,
        });
    }

    Ok(ForwardPass {
        slots: seq.slots.clone(),
        valid: seq.valid_mask.clone(),
        pos_base,
        d,
        drop_emb,
        layers,
        hidden: x,
        seq_len: s,
        last_valid,
    })
}

/// Accumulate exact gradients of a scalar loss into `grads`, given the
/// loss gradient w.r.t. the final representation. The padding embedding
/// row's gradient is forced to zero.
pub fn backward(params: &EncoderParams, pass: &ForwardPass, d_final: &[f64], grads: &mut [f64]) {
    let c = &params.config;
    let d = c.embedding_dim;
    let f = c.ffn_dim;
    let s = pass.seq_len;
    let p = &params.data;

    let mut dx = vec![0.0; s * d];
    for j in 0..d {
        dx[pass.last_valid * d + j] += d_final[j];
    }

    for (lo, tape) in params.layers.iter().zip(&pass.layers).rev() {
        // Feed-forward block.
        let mut d_z = dx.clone();
        if let Some(mask) = &tape.drop_ffn {
            apply_mask(&mut d_z, mask);
        }
        let mut d_act = vec![0.0; s * f];
        linear_backward(
            &tape.ffn_act,
            &d_z,
            s,
            f,
            d,
            &p[lo.w2..][..f * d],
            grads,
            lo.w2,
            lo.b2,
            &mut d_act,
        );
        let mut d_pre = d_act;
        for (g, &u) in d_pre.iter_mut().zip(&tape.ffn_pre) {
            *g *= gelu_prime(u);
        }
        let mut d_y2 = vec![0.0; s * d];
        linear_backward(
            &tape.y2,
            &d_pre,
            s,
            d,
            f,
            &p[lo.w1..][..d * f],
            grads,
            lo.w1,
            lo.b1,
            &mut d_y2,
        );
        layer_norm_backward(
            &d_y2,
            &tape.norm2,
            s,
            d,
            &p[lo.ln2_gain..][..d],
            grads,
            lo.ln2_gain,
            lo.ln2_bias,
            &mut dx,
        );

        // Attention block.
        let mut d_attn_out = dx.clone();
        if let Some(mask) = &tape.drop_attn {
            apply_mask(&mut d_attn_out, mask);
        }
        let mut d_ctx = vec![0.0; s * d];
        linear_backward(
            &tape.ctx,
            &d_attn_out,
            s,
            d,
            d,
            &p[lo.wo..][..d * d],
            grads,
            lo.wo,
            lo.bo,
            &mut d_ctx,
        );
        let mut dq = vec![0.0; s * d];
        let mut dk = vec![0.0; s * d];
        let mut dv = vec![0.0; s * d];
        attention_backward(
            &d_ctx, &tape.q, &tape.k, &tape.v, &tape.attn, s, d, c.n_heads, &pass.valid, &mut dq,
            &mut dk, &mut dv,
        );
        let mut d_y1 = vec![0.0; s * d];
        linear_backward(&tape.y1, &dq, s, d, d, &p[lo.wq..][..d * d], grads, lo.wq, lo.bq, &mut d_y1);
        linear_backward(&tape.y1, &dk, s, d, d, &p[lo.wk..][..d * d], grads, lo.wk, lo.bk, &mut d_y1);
        linear_backward(&tape.y1, &dv, s, d, d, &p[lo.wv..][..d * d], grads, lo.wv, lo.bv, &mut d_y1);
        layer_norm_backward(
            &d_y1,
            &tape.norm1,
            s,
            d,
            &p[lo.ln1_gain..][..d],
            grads,
            lo.ln1_gain,
            lo.ln1_bias,
            &mut dx,
        );
    }

    if let Some(mask) = &pass.drop_emb {
        apply_mask(&mut dx, mask);
    }
    for t in 0..s {
        let slot = pass.slots[t] as usize;
        for j in 0..d {
            grads[params.item_emb + slot * d + j] += dx[t * d + j];
            grads[params.pos_emb + (pass.pos_base + t) * d + j] += dx[t * d + j];
        }
    }
    for g in &mut grads[params.padding_row_range()] {
        *g = 0.0;
    }
}

/// Inner-product scores against every real item's embedding (tied weights).
/// Index `i` of the result scores item `i + 1`; the padding row is excluded.
pub fn score_all_items(params: &EncoderParams, final_repr: &[f64]) -> Vec<f64> {
    let d = params.config.embedding_dim;
    (1..=params.config.n_items)
        .map(|i| {
            let row = params.item_row(i as u32);
            let mut dot = 0.0;
            for j in 0..d {
                dot += final_repr[j] * row[j];
            }
            dot
        })
        .collect()
}

/// Backprop through the tied scoring head: accumulates embedding gradients
/// and adds the score path's contribution to `d_final`.
pub fn backward_scores(
    params: &EncoderParams,
    final_repr: &[f64],
    d_scores: &[f64],
    grads: &mut [f64],
    d_final: &mut [f64],
) {
    let d = params.config.embedding_dim;
    for (i, &ds) in d_scores.iter().enumerate() {
        let row_off = params.item_emb + (i + 1) * d;
        let row = &params.data[row_off..row_off + d];
        for j in 0..d {
            grads[row_off + j] += ds * final_repr[j];
            d_final[j] += ds * row[j];
        }
    }
}
