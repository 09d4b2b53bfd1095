//! Transformer encoder block shared by the text and vision encoders.
//!
//! One block is post-norm: multi-head self-attention with a residual
//! connection and layernorm, then a position-wise feed-forward with a
//! second residual and layernorm. An optional additive attention-mask
//! tensor excludes positions; masked logits sit at `-1e30`, whose `exp`
//! underflows to exactly +0.0, so masked positions contribute nothing
//! bit-for-bit.

use crate::error::Result;
use crate::tensor::{Activation, Graph, ParamId, Params, Tensor, TensorId};
use rand::Rng;

/// Additive attention-mask value; chosen so `exp` underflows to +0.0.
pub const MASK_OFF: f64 = -1e30;

/// Standard deviation for weight initialization across the model.
pub const INIT_STD: f64 = 0.02;

/// Shape of one encoder block; width fields must already be validated
/// by the owning encoder config.
#[derive(Debug, Clone, Copy)]
pub struct BlockConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub ffn_hidden: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub ln_eps: f64,
}

impl BlockConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Trainable scalars in one block with this shape.
    pub fn param_count(&self) -> usize {
        let (d, dh, f) = (self.d_model, self.head_dim(), self.ffn_hidden);
        let per_head = 3 * (d * dh + dh);
        let attn_out = d * d + d;
        let norms = 2 * (2 * d);
        let ffn = (d * f + f) + (f * d + d);
        self.n_heads * per_head + attn_out + norms + ffn
    }
}

struct HeadHandles {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
}

pub struct Block {
    cfg: BlockConfig,
    heads: Vec<HeadHandles>,
    wo: ParamId,
    bo: ParamId,
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    ffn_w1: ParamId,
    ffn_b1: ParamId,
    ffn_w2: ParamId,
    ffn_b2: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
}

impl Block {
    /// Registers one block's parameters under `prefix`. Weights start at
    /// normal(0, 0.02), biases at zero, layernorm gains at one;
    /// registration order fixes the RNG stream.
    pub fn init(
        cfg: BlockConfig,
        prefix: &str,
        params: &mut Params,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let (d, dh, f) = (cfg.d_model, cfg.head_dim(), cfg.ffn_hidden);
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let p = format!("{prefix}.h{h}");
            heads.push(HeadHandles {
                wq: weight(params, format!("{p}.wq"), vec![d, dh], &mut *rng)?,
                bq: params.register(format!("{p}.bq"), Tensor::zeros(vec![dh]), false)?,
                wk: weight(params, format!("{p}.wk"), vec![d, dh], &mut *rng)?,
                bk: params.register(format!("{p}.bk"), Tensor::zeros(vec![dh]), false)?,
                wv: weight(params, format!("{p}.wv"), vec![d, dh], &mut *rng)?,
                bv: params.register(format!("{p}.bv"), Tensor::zeros(vec![dh]), false)?,
            });
        }
        Ok(Block {
            cfg,
            heads,
            wo: weight(
                params,
                format!("{prefix}.attn_out.w"),
                vec![d, d],
                &mut *rng,
            )?,
            bo: params.register(
                format!("{prefix}.attn_out.b"),
                Tensor::zeros(vec![d]),
                false,
            )?,
            ln1_gain: params.register(format!("{prefix}.ln1.gain"), ones(d), false)?,
            ln1_bias: params.register(
                format!("{prefix}.ln1.bias"),
                Tensor::zeros(vec![d]),
                false,
            )?,
            ffn_w1: weight(params, format!("{prefix}.ffn.w1"), vec![d, f], &mut *rng)?,
            ffn_b1: params.register(format!("{prefix}.ffn.b1"), Tensor::zeros(vec![f]), false)?,
            ffn_w2: weight(params, format!("{prefix}.ffn.w2"), vec![f, d], &mut *rng)?,
            ffn_b2: params.register(format!("{prefix}.ffn.b2"), Tensor::zeros(vec![d]), false)?,
            ln2_gain: params.register(format!("{prefix}.ln2.gain"), ones(d), false)?,
            ln2_bias: params.register(
                format!("{prefix}.ln2.bias"),
                Tensor::zeros(vec![d]),
                false,
            )?,
        })
    }

    /// Applies the block to `x` (`[seq, d_model]`). `mask_bias`, when
    /// present, is a `[seq, seq]` additive term on the attention logits.
    pub fn forward(
        &self,
        g: &mut Graph,
        params: &Params,
        x: TensorId,
        mask_bias: Option<TensorId>,
        training: bool,
    ) -> Result<TensorId> {
        let cfg = &self.cfg;
        let scale = 1.0 / (cfg.head_dim() as f64).sqrt();

        // Multi-head self-attention: each head projects, attends, and
        // contributes a column block of the context.
        let mut ctx: Option<TensorId> = None;
        for head in &self.heads {
            let wq = g.param(params, head.wq);
            let bq = g.param(params, head.bq);
            let wk = g.param(params, head.wk);
            let bk = g.param(params, head.bk);
            let wv = g.param(params, head.wv);
            let bv = g.param(params, head.bv);
            let q = g.matmul(x, wq)?;
            let q = g.add_row_bias(q, bq)?;
            let k = g.matmul(x, wk)?;
            let k = g.add_row_bias(k, bk)?;
            let v = g.matmul(x, wv)?;
            let v = g.add_row_bias(v, bv)?;
            let kt = g.transpose(k)?;
            let scores = g.matmul(q, kt)?;
            let mut scores = g.scale(scores, scale);
            if let Some(bias) = mask_bias {
                scores = g.add(scores, bias)?;
            }
            let attn = g.softmax(scores)?;
            let head_ctx = g.matmul(attn, v)?;
            ctx = Some(match ctx {
                None => head_ctx,
                Some(acc) => g.concat_cols(acc, head_ctx)?,
            });
        }
        let ctx = ctx.expect("encoder configs require n_heads >= 1");
        let wo = g.param(params, self.wo);
        let bo = g.param(params, self.bo);
        let attn_out = g.matmul(ctx, wo)?;
        let attn_out = g.add_row_bias(attn_out, bo)?;
        let attn_out = g.dropout(attn_out, cfg.dropout, training)?;
        let ln1g = g.param(params, self.ln1_gain);
        let ln1b = g.param(params, self.ln1_bias);
        let res1 = g.add(x, attn_out)?;
        let x = g.layernorm(res1, ln1g, ln1b, cfg.ln_eps)?;

        // Position-wise feed-forward.
        let w1 = g.param(params, self.ffn_w1);
        let b1 = g.param(params, self.ffn_b1);
        let w2 = g.param(params, self.ffn_w2);
        let b2 = g.param(params, self.ffn_b2);
        let h = g.matmul(x, w1)?;
        let h = g.add_row_bias(h, b1)?;
        let h = g.activation(h, cfg.activation);
        let h = g.matmul(h, w2)?;
        let h = g.add_row_bias(h, b2)?;
        let h = g.dropout(h, cfg.dropout, training)?;
        let ln2g = g.param(params, self.ln2_gain);
        let ln2b = g.param(params, self.ln2_bias);
        let res2 = g.add(x, h)?;
        g.layernorm(res2, ln2g, ln2b, cfg.ln_eps)
    }
}

pub fn ones(n: usize) -> Tensor {
    Tensor::new(vec![n], vec![1.0; n]).expect("shape matches data")
}

/// Registers a decayed weight tensor initialized at normal(0, 0.02).
pub fn weight(
    params: &mut Params,
    name: String,
    shape: Vec<usize>,
    rng: &mut impl Rng,
) -> Result<ParamId> {
    params.register(name, Tensor::randn(shape, INIT_STD, rng), true)
}
