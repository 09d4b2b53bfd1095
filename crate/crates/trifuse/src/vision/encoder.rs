//! Patch-based transformer image encoder.
//!
//! The normalized CHW image is cut into a row-major grid of square
//! patches; each patch is flattened, linearly projected, and given a
//! learned position embedding. Pooling is either a learned CLS token
//! prepended to the patch sequence or a global average over the final
//! patch states.
//!
//! Two features come out of a forward pass:
//! - `shallow`: mean of the embedded patches (projection + position
//!   embeddings) before any encoder layer — the "input level" view.
//! - `deep`: the pooled final hidden state.

use crate::error::{Error, Result};
use crate::tensor::{Activation, Graph, ParamId, Params, Tensor, TensorId};
use crate::transformer::{weight, Block, BlockConfig};
use rand::Rng;

use super::image::CHANNELS;

/// How the final patch states collapse to one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// Learned token prepended to the sequence; its final state is the
    /// feature.
    ClsToken,
    /// Mean over the final patch states (no extra token).
    GlobalAverage,
}

impl Pooling {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cls_token" => Ok(Pooling::ClsToken),
            "global_average" => Ok(Pooling::GlobalAverage),
            other => Err(Error::parameter(
                "Pooling::parse",
                format!("unknown pooling {other:?}; expected cls_token or global_average"),
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Pooling::ClsToken => "cls_token",
            Pooling::GlobalAverage => "global_average",
        }
    }
}

#[derive(Debug, Clone)]
pub struct VisionEncoderConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub ln_eps: f64,
    pub pooling: Pooling,
}

impl Default for VisionEncoderConfig {
    fn default() -> Self {
        VisionEncoderConfig {
            image_size: 32,
            patch_size: 8,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            dropout: 0.1,
            activation: Activation::Gelu,
            ln_eps: 1e-5,
            pooling: Pooling::ClsToken,
        }
    }
}

impl VisionEncoderConfig {
    pub fn grid_size(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn n_patches(&self) -> usize {
        self.grid_size() * self.grid_size()
    }

    /// Flattened patch length: all channels of one square patch.
    pub fn patch_dim(&self) -> usize {
        CHANNELS * self.patch_size * self.patch_size
    }

    pub fn ffn_hidden(&self) -> usize {
        4 * self.d_model
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
        if self.patch_size == 0 {
            problems.push("patch_size must be positive".to_string());
        } else if self.image_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            problems.push(format!(
                "image_size {} is not a positive multiple of patch_size {}",
                self.image_size, self.patch_size
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
        let proj = self.patch_dim() * self.d_model + self.d_model;
        let pos = self.n_patches() * self.d_model;
        let cls = match self.pooling {
            Pooling::ClsToken => self.d_model,
            Pooling::GlobalAverage => 0,
        };
        proj + pos + cls + self.n_layers * self.block_config().param_count()
    }
}

/// Features produced by one encoder pass.
#[derive(Debug, Clone, Copy)]
pub struct VisionFeatures {
    /// Mean of the embedded patches, before any encoder layer.
    pub shallow: TensorId,
    /// Pooled final hidden state.
    pub deep: TensorId,
}

pub struct VisionEncoder {
    cfg: VisionEncoderConfig,
    proj_w: ParamId,
    proj_b: ParamId,
    pos_emb: ParamId,
    cls: Option<ParamId>,
    layers: Vec<Block>,
}

impl VisionEncoder {
    /// Registers all encoder parameters under `prefix`. Weights start at
    /// normal(0, 0.02), biases at zero, and layernorm gains at one;
    /// registration order fixes the RNG stream.
    pub fn init(
        cfg: VisionEncoderConfig,
        prefix: &str,
        params: &mut Params,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let proj_w = weight(
            params,
            format!("{prefix}.patch_proj.w"),
            vec![cfg.patch_dim(), d],
            &mut *rng,
        )?;
        let proj_b = params.register(
            format!("{prefix}.patch_proj.b"),
            Tensor::zeros(vec![d]),
            false,
        )?;
        let pos_emb = weight(
            params,
            format!("{prefix}.pos_emb"),
            vec![cfg.n_patches(), d],
            &mut *rng,
        )?;
        let cls = match cfg.pooling {
            Pooling::ClsToken => Some(weight(
                params,
                format!("{prefix}.cls"),
                vec![1, d],
                &mut *rng,
            )?),
            Pooling::GlobalAverage => None,
        };
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            layers.push(Block::init(
                cfg.block_config(),
                &format!("{prefix}.l{l}"),
                params,
                &mut *rng,
            )?);
        }
        Ok(VisionEncoder {
            cfg,
            proj_w,
            proj_b,
            pos_emb,
            cls,
            layers,
        })
    }

    pub fn config(&self) -> &VisionEncoderConfig {
        &self.cfg
    }

    /// Cuts a normalized CHW tensor into the row-major patch matrix
    /// `[n_patches, patch_dim]`; within a row, samples are ordered
    /// channel-major, then top-to-bottom, left-to-right.
    fn patch_rows(&self, pixels: &Tensor) -> Result<Vec<f64>> {
        let cfg = &self.cfg;
        let s = cfg.image_size;
        let expect = [CHANNELS, s, s];
        if pixels.shape() != expect {
            return Err(Error::shape(
                "VisionEncoder::forward",
                format!(
                    "expected a [{CHANNELS}, {s}, {s}] image tensor, got {:?}",
                    pixels.shape()
                ),
            ));
        }
        let data = pixels.data();
        let (g, p) = (cfg.grid_size(), cfg.patch_size);
        let mut rows = Vec::with_capacity(cfg.n_patches() * cfg.patch_dim());
        for gy in 0..g {
            for gx in 0..g {
                for c in 0..CHANNELS {
                    for dy in 0..p {
                        let y = gy * p + dy;
                        let x0 = gx * p;
                        let base = c * s * s + y * s + x0;
                        rows.extend_from_slice(&data[base..base + p]);
                    }
                }
            }
        }
        Ok(rows)
    }

    /// Runs the encoder over a normalized `[3, S, S]` image tensor.
    pub fn forward(
        &self,
        g: &mut Graph,
        params: &Params,
        pixels: &Tensor,
        training: bool,
    ) -> Result<VisionFeatures> {
        let cfg = &self.cfg;
        let rows = self.patch_rows(pixels)?;
        let patches = g.constant(vec![cfg.n_patches(), cfg.patch_dim()], rows)?;
        let w = g.param(params, self.proj_w);
        let b = g.param(params, self.proj_b);
        let proj = g.matmul(patches, w)?;
        let proj = g.add_row_bias(proj, b)?;
        let pos_table = g.param(params, self.pos_emb);
        let positions: Vec<usize> = (0..cfg.n_patches()).collect();
        let pos = g.embed(pos_table, &positions)?;
        let embedded = g.add(proj, pos)?;

        // Shallow feature: mean of the embedded patches, taken before
        // dropout so it is the same view in training and inference.
        let shallow = g.mean_axis(embedded, 0)?;

        let mut x = match self.cls {
            Some(cls) => {
                let cls_row = g.param(params, cls);
                g.concat_rows(cls_row, embedded)?
            }
            None => embedded,
        };
        x = g.dropout(x, cfg.dropout, training)?;
        for layer in &self.layers {
            x = layer.forward(g, params, x, None, training)?;
        }
        let deep = match self.cls {
            Some(_) => g.select_row(x, 0)?,
            None => g.mean_axis(x, 0)?,
        };
        Ok(VisionFeatures { shallow, deep })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{check_gradients, GradCheckOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config(pooling: Pooling) -> VisionEncoderConfig {
        VisionEncoderConfig {
            image_size: 4,
            patch_size: 2,
            d_model: 4,
            n_layers: 1,
            n_heads: 2,
            dropout: 0.0,
            pooling,
            ..VisionEncoderConfig::default()
        }
    }

    fn random_pixels(size: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..CHANNELS * size * size)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        Tensor::new(vec![CHANNELS, size, size], data).unwrap()
    }

    #[test]
    fn config_validation_reports_every_problem() {
        let cfg = VisionEncoderConfig {
            image_size: 30,
            patch_size: 8,
            d_model: 10,
            n_heads: 4,
            ..VisionEncoderConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("multiple of patch_size"), "{err}");
        assert!(err.contains("not divisible"), "{err}");
    }

    #[test]
    fn registered_parameter_count_matches_closed_form() {
        for pooling in [Pooling::ClsToken, Pooling::GlobalAverage] {
            let cfg = tiny_config(pooling);
            let mut params = Params::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            VisionEncoder::init(cfg.clone(), "vis", &mut params, &mut rng).unwrap();
            assert_eq!(params.numel(), cfg.param_count(), "{pooling:?}");
        }
    }

    #[test]
    fn forward_rejects_wrong_image_shapes() {
        let cfg = tiny_config(Pooling::ClsToken);
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = VisionEncoder::init(cfg, "vis", &mut params, &mut rng).unwrap();
        let mut g = Graph::new(0);
        let bad = Tensor::zeros(vec![CHANNELS, 8, 8]);
        let err = enc
            .forward(&mut g, &params, &bad, false)
            .unwrap_err()
            .to_string();
        assert!(err.contains("[3, 4, 4]"), "{err}");
    }

    #[test]
    fn patch_rows_follow_channel_major_row_major_order() {
        // 4x4 image, 2x2 patches: pixel value encodes (channel, y, x).
        let size = 4;
        let data: Vec<f64> = (0..CHANNELS * size * size).map(|i| i as f64).collect();
        let pixels = Tensor::new(vec![CHANNELS, size, size], data).unwrap();
        let cfg = tiny_config(Pooling::GlobalAverage);
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let enc = VisionEncoder::init(cfg, "vis", &mut params, &mut rng).unwrap();
        let rows = enc.patch_rows(&pixels).unwrap();
        // Patch (gy=0, gx=1), channel 0 covers x in {2,3}, y in {0,1}.
        assert_eq!(&rows[12..16], &[2.0, 3.0, 6.0, 7.0]);
        // Same patch, channel 2 starts at offset 2*16 within the image.
        assert_eq!(&rows[12 + 8..12 + 12], &[34.0, 35.0, 38.0, 39.0]);
    }

    #[test]
    fn zero_layers_with_global_average_makes_deep_equal_shallow() {
        let cfg = VisionEncoderConfig {
            n_layers: 0,
            ..tiny_config(Pooling::GlobalAverage)
        };
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = VisionEncoder::init(cfg, "vis", &mut params, &mut rng).unwrap();
        let mut g = Graph::new(0);
        let out = enc
            .forward(&mut g, &params, &random_pixels(4, 4), false)
            .unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(g.value(out.shallow)), bits(g.value(out.deep)));
    }

    #[test]
    fn without_positions_the_encoder_ignores_patch_order() {
        // Zero the position table; swapping two patch blocks must then
        // leave the shallow mean and the global-average pooling invariant.
        let cfg = tiny_config(Pooling::GlobalAverage);
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = VisionEncoder::init(cfg, "vis", &mut params, &mut rng).unwrap();
        let pos = params.find("vis.pos_emb").unwrap();
        for v in params.get_mut(pos).data_mut() {
            *v = 0.0;
        }

        let pixels = random_pixels(4, 6);
        let mut swapped = pixels.data().to_vec();
        // Swap patch (0,0) with patch (1,1): 2x2 blocks in every channel.
        let s = 4;
        for c in 0..CHANNELS {
            for dy in 0..2 {
                for dx in 0..2 {
                    let a = c * s * s + dy * s + dx;
                    let b = c * s * s + (dy + 2) * s + (dx + 2);
                    swapped.swap(a, b);
                }
            }
        }
        let swapped = Tensor::new(vec![CHANNELS, s, s], swapped).unwrap();

        let mut g1 = Graph::new(0);
        let f1 = enc.forward(&mut g1, &params, &pixels, false).unwrap();
        let mut g2 = Graph::new(0);
        let f2 = enc.forward(&mut g2, &params, &swapped, false).unwrap();
        for (a, b) in g1.value(f1.shallow).iter().zip(g2.value(f2.shallow)) {
            assert!((a - b).abs() < 1e-12, "shallow: {a} vs {b}");
        }
        for (a, b) in g1.value(f1.deep).iter().zip(g2.value(f2.deep)) {
            assert!((a - b).abs() < 1e-12, "deep: {a} vs {b}");
        }
    }

    #[test]
    fn cls_pooling_depends_on_the_learned_token() {
        let cfg = tiny_config(Pooling::ClsToken);
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let enc = VisionEncoder::init(cfg, "vis", &mut params, &mut rng).unwrap();
        let pixels = random_pixels(4, 8);
        let mut g1 = Graph::new(0);
        let f1 = enc.forward(&mut g1, &params, &pixels, false).unwrap();
        let before = g1.value(f1.deep).to_vec();
        let cls = params.find("vis.cls").unwrap();
        for v in params.get_mut(cls).data_mut() {
            *v += 0.5;
        }
        let mut g2 = Graph::new(0);
        let f2 = enc.forward(&mut g2, &params, &pixels, false).unwrap();
        let after = g2.value(f2.deep).to_vec();
        assert_ne!(before, after);
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        for pooling in [Pooling::ClsToken, Pooling::GlobalAverage] {
            let cfg = tiny_config(pooling);
            let mut params = Params::new();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let enc = VisionEncoder::init(cfg, "vis", &mut params, &mut rng).unwrap();
            let pixels = random_pixels(4, 12);
            let report = check_gradients(
                &mut params,
                |g, p| {
                    let out = enc.forward(g, p, &pixels, false)?;
                    let merged = g.concat_cols(out.shallow, out.deep)?;
                    Ok(g.sum_all(merged))
                },
                &GradCheckOptions::default(),
            )
            .unwrap();
            assert!(report.pass(), "{pooling:?}:\n{}", report.render());
        }
    }
}
