//! Transformer text encoder.
//!
//! Input is a CLS-prefixed id sequence, optionally PAD-padded; PAD
//! positions are excluded from attention with a `-1e30` additive mask,
//! which underflows to an exactly-zero softmax share, and from the
//! shallow mean, so a PAD tail of any length leaves both features
//! bit-identical.
//!
//! Two features come out of a forward pass:
//! - `shallow`: mask-aware mean of the embedded input (token + position
//!   embeddings) before any encoder layer — the "input level" view.
//! - `deep`: the final hidden state at the CLS position.

use crate::error::{Error, Result};
use crate::tensor::{Activation, Graph, ParamId, Params, TensorId};
use crate::trace::Trace;
use crate::transformer::{weight, Block, BlockConfig, MASK_OFF};
use rand::Rng;

use super::vocab::{CLS_ID, PAD_ID};

#[derive(Debug, Clone)]
pub struct TextEncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub ln_eps: f64,
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        TextEncoderConfig {
            vocab_size: 3,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            max_len: 64,
            dropout: 0.1,
            activation: Activation::Gelu,
            ln_eps: 1e-5,
        }
    }
}

impl TextEncoderConfig {
    /// Hidden width of the feed-forward sublayer.
    pub fn ffn_hidden(&self) -> usize {
        4 * self.d_model
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    fn block_config(&self) -> BlockConfig {
        BlockConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            ffn_hidden: self.ffn_hidden(),
            dropout: self.dropout,
            activation: self.activation,
            ln_eps: self.ln_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.vocab_size < 3 {
            problems.push(format!(
                "vocab_size {} cannot hold the reserved ids",
                self.vocab_size
            ));
        }
        if self.d_model == 0 {
            problems.push("d_model must be positive".to_string());
        }
        if self.n_heads == 0 {
            problems.push("n_heads must be positive".to_string());
        } else if !self.d_model.is_multiple_of(self.n_heads) {
            problems.push(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.max_len < 2 {
            problems.push(format!(
                "max_len {} leaves no room for CLS plus a token",
                self.max_len
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if self.ln_eps <= 0.0 {
            problems.push(format!("ln_eps {} must be positive", self.ln_eps));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }

    /// Closed-form total parameter count of an encoder with this shape.
    pub fn param_count(&self) -> usize {
        (self.vocab_size + self.max_len) * self.d_model
            + self.n_layers * self.block_config().param_count()
    }
}

/// Features produced by one encoder pass.
#[derive(Debug, Clone, Copy)]
pub struct TextFeatures {
    /// Mask-aware mean of the embedded input, before any encoder layer.
    pub shallow: TensorId,
    /// Final hidden state at the CLS position.
    pub deep: TensorId,
}

pub struct TextEncoder {
    cfg: TextEncoderConfig,
    tok_emb: ParamId,
    pos_emb: ParamId,
    layers: Vec<Block>,
}

impl TextEncoder {
    /// Registers all encoder parameters under `prefix` and returns the
    /// handle set. Weights start at normal(0, 0.02), biases at zero, and
    /// layernorm gains at one; registration order fixes the RNG stream.
    pub fn init(
        cfg: TextEncoderConfig,
        prefix: &str,
        params: &mut Params,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let tok_emb = weight(
            params,
            format!("{prefix}.tok_emb"),
            vec![cfg.vocab_size, d],
            &mut *rng,
        )?;
        let pos_emb = weight(
            params,
            format!("{prefix}.pos_emb"),
            vec![cfg.max_len, d],
            &mut *rng,
        )?;
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            layers.push(Block::init(
                cfg.block_config(),
                &format!("{prefix}.l{l}"),
                params,
                &mut *rng,
            )?);
        }
        Ok(TextEncoder {
            cfg,
            tok_emb,
            pos_emb,
            layers,
        })
    }

    pub fn config(&self) -> &TextEncoderConfig {
        &self.cfg
    }

    /// Runs the encoder over a prepared id sequence (CLS first, optional
    /// PAD tail). Returns the shallow and deep features as tape nodes.
    pub fn forward(
        &self,
        g: &mut Graph,
        params: &Params,
        ids: &[usize],
        training: bool,
    ) -> Result<TextFeatures> {
        let cfg = &self.cfg;
        let len = ids.len();
        if len == 0 || len > cfg.max_len {
            return Err(Error::contract(
                "TextEncoder::forward",
                format!("sequence length {len} outside 1..={}", cfg.max_len),
            ));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= cfg.vocab_size) {
            return Err(Error::contract(
                "TextEncoder::forward",
                format!(
                    "token id {bad} out of range for vocab_size {}",
                    cfg.vocab_size
                ),
            ));
        }
        let mask: Vec<bool> = ids.iter().map(|&i| i != PAD_ID).collect();
        let active = mask.iter().filter(|&&m| m).count();
        if active == 0 {
            return Err(Error::contract(
                "TextEncoder::forward",
                "sequence is all PAD",
            ));
        }

        // Embedded input: token rows plus position rows.
        let tok_table = g.param(params, self.tok_emb);
        let pos_table = g.param(params, self.pos_emb);
        let tok = g.embed(tok_table, ids)?;
        let positions: Vec<usize> = (0..len).collect();
        let pos = g.embed(pos_table, &positions)?;
        let embedded = g.add(tok, pos)?;

        // Shallow feature: masked mean over positions, taken before
        // dropout so it is the same view in training and inference.
        let mean_w: Vec<f64> = mask
            .iter()
            .map(|&m| if m { 1.0 / active as f64 } else { 0.0 })
            .collect();
        let mean_row = g.constant(vec![1, len], mean_w)?;
        let shallow_mat = g.matmul(mean_row, embedded)?;
        let shallow = g.reshape(shallow_mat, vec![cfg.d_model])?;

        let mut x = g.dropout(embedded, cfg.dropout, training)?;
        if !self.layers.is_empty() {
            let bias_row: Vec<f64> = mask
                .iter()
                .map(|&m| if m { 0.0 } else { MASK_OFF })
                .collect();
            let mask_bias = g.constant(vec![len, len], bias_row.repeat(len))?;
            for layer in &self.layers {
                x = layer.forward(g, params, x, Some(mask_bias), training)?;
            }
        }
        let deep = g.select_row(x, 0)?;
        Ok(TextFeatures { shallow, deep })
    }
}

/// Prepends CLS and enforces the length budget, logging any truncation.
/// The result always starts with CLS and never exceeds `max_len` ids.
pub fn prepare_sequence(
    token_ids: &[usize],
    max_len: usize,
    trace: &mut Trace,
    sample_id: &str,
) -> Vec<usize> {
    let budget = max_len.saturating_sub(1);
    let mut ids = Vec::with_capacity(token_ids.len().min(budget) + 1);
    ids.push(CLS_ID);
    if token_ids.len() > budget {
        trace.truncated(sample_id, token_ids.len());
        ids.extend_from_slice(&token_ids[..budget]);
    } else {
        ids.extend_from_slice(token_ids);
    }
    ids
}
