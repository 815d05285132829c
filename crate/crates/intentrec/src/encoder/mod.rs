//! Causal multi-head Transformer sequence encoder over padded item
//! sequences, with exact reverse-mode gradients for every parameter.
//!
//! Parameters live in one flat `f64` buffer described by a layout table, so
//! the optimizer, checkpointing, and finite-difference checks all see the
//! same addressing. Item-embedding row 0 is the padding row and stays zero.

mod net;

pub use net::{
    backward, backward_scores, embed, encode, encode_training, score_all_items, ForwardPass,
    SequenceEncoding,
};

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::derived_rng;

/// Architecture and regularization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub embedding_dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub n_items: usize,
    pub dropout_rate: f64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.n_heads == 0 {
            return Err(Error::Config(
                "embedding_dim and n_heads must be positive".into(),
            ));
        }
        if !self.embedding_dim.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "embedding_dim {} not divisible by n_heads {}",
                self.embedding_dim, self.n_heads
            )));
        }
        if self.ffn_dim == 0 || self.max_len == 0 || self.n_items == 0 {
            return Err(Error::Config(
                "ffn_dim, max_len, and n_items must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Offsets of one layer's tensors inside the flat buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LayerOffsets {
    pub ln1_gain: usize,
    pub ln1_bias: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_gain: usize,
    pub ln2_bias: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Name, offset, rows, cols of one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All learnable tensors of the encoder in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub data: Vec<f64>,
    pub(crate) item_emb: usize,
    pub(crate) pos_emb: usize,
    pub(crate) layers: Vec<LayerOffsets>,
    tensors: Vec<TensorSpec>,
}

fn build_layout(config: &EncoderConfig) -> (usize, usize, Vec<LayerOffsets>, Vec<TensorSpec>) {
    let d = config.embedding_dim;
    let f = config.ffn_dim;
    let mut tensors = Vec::new();
    let mut cursor = 0usize;
    let mut alloc = |name: String, rows: usize, cols: usize| {
        let offset = cursor;
        cursor += rows * cols;
        tensors.push(TensorSpec {
            name,
            offset,
            rows,
            cols,
        });
        offset
    };
    let item_emb = alloc("item_embeddings".into(), config.n_items + 1, d);
    let pos_emb = alloc("positional".into(), config.max_len, d);
    let mut layers = Vec::with_capacity(config.n_layers);
    for l in 0..config.n_layers {
        layers.push(LayerOffsets {
            ln1_gain: alloc(format!("layer{l}.ln1_gain"), 1, d),
            ln1_bias: alloc(format!("layer{l}.ln1_bias"), 1, d),
            wq: alloc(format!("layer{l}.wq"), d, d),
            bq: alloc(format!("layer{l}.bq"), 1, d),
            wk: alloc(format!("layer{l}.wk"), d, d),
            bk: alloc(format!("layer{l}.bk"), 1, d),
            wv: alloc(format!("layer{l}.wv"), d, d),
            bv: alloc(format!("layer{l}.bv"), 1, d),
            wo: alloc(format!("layer{l}.wo"), d, d),
            bo: alloc(format!("layer{l}.bo"), 1, d),
            ln2_gain: alloc(format!("layer{l}.ln2_gain"), 1, d),
            ln2_bias: alloc(format!("layer{l}.ln2_bias"), 1, d),
            w1: alloc(format!("layer{l}.w1"), d, f),
            b1: alloc(format!("layer{l}.b1"), 1, f),
            w2: alloc(format!("layer{l}.w2"), f, d),
            b2: alloc(format!("layer{l}.b2"), 1, d),
        });
    }
    (item_emb, pos_emb, layers, tensors)
}

/// Initialize parameters: Xavier-uniform projection weights, uniform
/// embeddings scaled by 1/sqrt(d), unit layer-norm gains, zero biases, and a
/// zeroed padding row. Deterministic per seed.
pub fn init_params(config: EncoderConfig, seed: u64) -> Result<EncoderParams> {
    config.validate()?;
    let (item_emb, pos_emb, layers, tensors) = build_layout(&config);
    let total: usize = tensors.iter().map(TensorSpec::len).sum();
    let mut data = vec![0.0; total];
    let mut rng = derived_rng(seed, "encoder-init", 0);
    for spec in &tensors {
        let slice = &mut data[spec.offset..spec.offset + spec.len()];
        if spec.name.ends_with("gain") {
            slice.fill(1.0);
        } else if spec.name.ends_with("bias")
            || spec.name.ends_with(".bq")
            || spec.name.ends_with(".bk")
            || spec.name.ends_with(".bv")
            || spec.name.ends_with(".bo")
            || spec.name.ends_with(".b1")
            || spec.name.ends_with(".b2")
        {
            slice.fill(0.0);
        } else if spec.name == "item_embeddings" || spec.name == "positional" {
            let r = 1.0 / (config.embedding_dim as f64).sqrt();
            for v in slice.iter_mut() {
                *v = rng.gen_range(-r..r);
            }
        } else {
            let r = (6.0 / (spec.rows + spec.cols) as f64).sqrt();
            for v in slice.iter_mut() {
                *v = rng.gen_range(-r..r);
            }
        }
    }
    let mut params = EncoderParams {
        config,
        data,
        item_emb,
        pos_emb,
        layers,
        tensors,
    };
    params.zero_padding_row();
    Ok(params)
}

impl EncoderParams {
    pub fn n_params(&self) -> usize {
        self.data.len()
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    /// Force the padding item's embedding row to zero.
    pub fn zero_padding_row(&mut self) {
        let d = self.config.embedding_dim;
        self.data[self.item_emb..self.item_emb + d].fill(0.0);
    }

    pub(crate) fn item_row(&self, item: u32) -> &[f64] {
        let d = self.config.embedding_dim;
        let start = self.item_emb + item as usize * d;
        &self.data[start..start + d]
    }

    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    /// Offset range of the padding embedding row inside the flat buffer.
    pub fn padding_row_range(&self) -> std::ops::Range<usize> {
        self.item_emb..self.item_emb + self.config.embedding_dim
    }

    // -----------------------------------------------------------------
    // Checkpointing: versioned text dump with shape headers. Values are
    // stored as exact IEEE-754 bit patterns so round trips are lossless.
    // -----------------------------------------------------------------

    pub fn save(&self, path: &Path) -> Result<()> {
        let c = &self.config;
        let mut out = String::new();
        out.push_str("intentrec-checkpoint v1\n");
        out.push_str(&format!(
            "embedding_dim={} n_heads={} n_layers={} ffn_dim={} max_len={} n_items={} dropout_rate={}\n",
            c.embedding_dim, c.n_heads, c.n_layers, c.ffn_dim, c.max_len, c.n_items, c.dropout_rate
        ));
        for spec in &self.tensors {
            out.push_str(&format!(
                "tensor {} {} {}\n",
                spec.name, spec.rows, spec.cols
            ));
            for r in 0..spec.rows {
                let row = &self.data[spec.offset + r * spec.cols..spec.offset + (r + 1) * spec.cols];
                let hex: Vec<String> = row.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
                out.push_str(&hex.join(" "));
                out.push('\n');
            }
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EncoderParams> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or_default();
        if magic != "intentrec-checkpoint v1" {
            return Err(Error::Data(format!(
                "unrecognized checkpoint header {magic:?} in {}",
                path.display()
            )));
        }
        let header = lines
            .next()
            .ok_or_else(|| Error::Data("truncated checkpoint".into()))?;
        let mut fields = std::collections::HashMap::new();
        for kv in header.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("bad checkpoint header field {kv:?}")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get_usize = |k: &str| -> Result<usize> {
            fields
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Data(format!("missing checkpoint field {k}")))
        };
        let config = EncoderConfig {
            embedding_dim: get_usize("embedding_dim")?,
            n_heads: get_usize("n_heads")?,
            n_layers: get_usize("n_layers")?,
            ffn_dim: get_usize("ffn_dim")?,
            max_len: get_usize("max_len")?,
            n_items: get_usize("n_items")?,
            dropout_rate: fields
                .get("dropout_rate")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Data("missing checkpoint field dropout_rate".into()))?,
        };
        config.validate()?;
        let (item_emb, pos_emb, layers, tensors) = build_layout(&config);
        let total: usize = tensors.iter().map(TensorSpec::len).sum();
        let mut data = vec![0.0; total];
        for spec in &tensors {
            let head = lines
                .next()
                .ok_or_else(|| Error::Data(format!("missing tensor {}", spec.name)))?;
            let expected = format!("tensor {} {} {}", spec.name, spec.rows, spec.cols);
            if head != expected {
                return Err(Error::Data(format!(
                    "checkpoint shape mismatch: expected {expected:?}, found {head:?}"
                )));
            }
            for r in 0..spec.rows {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Data(format!("truncated tensor {}", spec.name)))?;
                let values: Vec<&str> = line.split_whitespace().collect();
                if values.len() != spec.cols {
                    return Err(Error::Data(format!(
                        "tensor {} row {r}: expected {} values, found {}",
                        spec.name,
                        spec.cols,
                        values.len()
                    )));
                }
                for (c, hex) in values.iter().enumerate() {
                    let bits = u64::from_str_radix(hex, 16)
                        .map_err(|_| Error::Data(format!("bad value in tensor {}", spec.name)))?;
                    data[spec.offset + r * spec.cols + c] = f64::from_bits(bits);
                }
            }
        }
        Ok(EncoderParams {
            config,
            data,
            item_emb,
            pos_emb,
            layers,
            tensors,
        })
    }
}
