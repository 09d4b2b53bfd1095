//! Author-intent labels, fusion strategies, and the assembled classifier.
//!
//! One [`IntentModel`] covers five ablations ([`ModelKind`]): two unimodal
//! baselines (a linear head on one encoder's pooled state) and three
//! fusion placements that differ in *where* the modalities meet:
//!
//! - **early**: a projected sum of the two *pre-encoder* ("shallow")
//!   features, `f(W_t t + W_i i + b)`, then a linear classifier. Encoder
//!   depth never enters this path, so early models are built with zero
//!   encoder layers.
//! - **intermediate**: both encoders run fully; their pooled states are
//!   concatenated and projected, `f(W [t; i] + b)`, then classified.
//!   With block weights `W = [W_t | W_i]` this is the same map as the
//!   early-fusion layer — the strategies differ only in which features
//!   they consume.
//! - **late**: each modality gets its own linear class scorer; the two
//!   class-score vectors are blended by learned weights (per-modality
//!   scalars, or full matrices) plus a bias, through `f`.
//!
//! Scalar blend weights start at 1 and matrix weights at the identity so
//! an untrained late model begins as the sum of its branches; like
//! biases and layernorm gains, blend weights are excluded from weight
//! decay.

use crate::error::{Error, Result};
use crate::tensor::{Activation, Graph, ParamId, Params, Tensor, TensorId};
use crate::text::{TextEncoder, TextEncoderConfig};
use crate::transformer::weight;
use crate::vision::{Pooling, VisionEncoder, VisionEncoderConfig};
use rand::Rng;
use std::str::FromStr;

/// The six author-intent classes, in canonical index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntentLabel {
    Informative,
    Advocative,
    Promotive,
    Exhibitionist,
    Expressive,
    Controversial,
}

impl IntentLabel {
    pub const COUNT: usize = 6;

    pub const ALL: [IntentLabel; IntentLabel::COUNT] = [
        IntentLabel::Informative,
        IntentLabel::Advocative,
        IntentLabel::Promotive,
        IntentLabel::Exhibitionist,
        IntentLabel::Expressive,
        IntentLabel::Controversial,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        IntentLabel::ALL.get(i).copied().ok_or_else(|| {
            Error::parameter(
                "IntentLabel::from_index",
                format!("no class with index {i}"),
            )
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            IntentLabel::Informative => "Informative",
            IntentLabel::Advocative => "Advocative",
            IntentLabel::Promotive => "Promotive",
            IntentLabel::Exhibitionist => "Exhibitionist",
            IntentLabel::Expressive => "Expressive",
            IntentLabel::Controversial => "Controversial",
        }
    }

    pub fn names() -> [&'static str; IntentLabel::COUNT] {
        IntentLabel::ALL.map(IntentLabel::name)
    }
}

impl FromStr for IntentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IntentLabel::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::data(format!("unknown intent label {s:?}")))
    }
}

/// Which model an experiment runs; the three fusion kinds name where the
/// modalities are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    TextOnly,
    ImageOnly,
    EarlyFusion,
    LateFusion,
    IntermediateFusion,
}

impl ModelKind {
    pub fn table_label(self) -> &'static str {
        match self {
            ModelKind::TextOnly => "Text-only",
            ModelKind::ImageOnly => "Image-only",
            ModelKind::EarlyFusion => "Early fusion",
            ModelKind::LateFusion => "Late fusion",
            ModelKind::IntermediateFusion => "Intermediate fusion",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "text_only" => Ok(ModelKind::TextOnly),
            "image_only" => Ok(ModelKind::ImageOnly),
            "early_fusion" => Ok(ModelKind::EarlyFusion),
            "late_fusion" => Ok(ModelKind::LateFusion),
            "intermediate_fusion" => Ok(ModelKind::IntermediateFusion),
            other => Err(Error::parameter(
                "ModelKind::parse",
                format!(
                    "unknown model kind {other:?}; expected text_only, image_only, \
                     early_fusion, late_fusion, or intermediate_fusion"
                ),
            )),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TextOnly => "text_only",
            ModelKind::ImageOnly => "image_only",
            ModelKind::EarlyFusion => "early_fusion",
            ModelKind::LateFusion => "late_fusion",
            ModelKind::IntermediateFusion => "intermediate_fusion",
        }
    }

    pub fn uses_text(self) -> bool {
        self != ModelKind::ImageOnly
    }

    pub fn uses_image(self) -> bool {
        self != ModelKind::TextOnly
    }

    /// Canonical row order of the five-way ablation table.
    pub const ABLATION_ORDER: [ModelKind; 5] = [
        ModelKind::TextOnly,
        ModelKind::ImageOnly,
        ModelKind::EarlyFusion,
        ModelKind::LateFusion,
        ModelKind::IntermediateFusion,
    ];
}

/// How late fusion weights each modality's class scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LateCombiner {
    /// One learned scalar per modality.
    Scalar,
    /// One learned `[classes, classes]` matrix per modality.
    Matrix,
}

impl LateCombiner {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "scalar" => Ok(LateCombiner::Scalar),
            "matrix" => Ok(LateCombiner::Matrix),
            other => Err(Error::parameter(
                "LateCombiner::parse",
                format!("unknown late combiner {other:?}; expected scalar or matrix"),
            )),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LateCombiner::Scalar => "scalar",
            LateCombiner::Matrix => "matrix",
        }
    }
}

/// Settings of the fusion stage itself (ignored by unimodal models).
#[derive(Debug, Clone)]
pub struct FusionConfig {
    /// Width of the fused hidden layer (early and intermediate fusion).
    pub d_fuse: usize,
    /// Dropout on the fused hidden layer during training.
    pub dropout: f64,
    /// Nonlinearity applied by the fusion layer / late blend.
    pub activation: Activation,
    pub late_combiner: LateCombiner,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            d_fuse: 64,
            dropout: 0.1,
            activation: Activation::Gelu,
            late_combiner: LateCombiner::Scalar,
        }
    }
}

/// Complete description of one classifier.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub text: TextEncoderConfig,
    pub vision: VisionEncoderConfig,
    pub fusion: FusionConfig,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            text: TextEncoderConfig::default(),
            vision: VisionEncoderConfig::default(),
            fusion: FusionConfig::default(),
        }
    }

    /// Applies kind-specific simplifications: early fusion never runs
    /// encoder layers or pooling, so those settings are cleared rather
    /// than left to register unused parameters.
    fn normalized(&self) -> ModelConfig {
        let mut cfg = self.clone();
        if cfg.kind == ModelKind::EarlyFusion {
            cfg.text.n_layers = 0;
            cfg.vision.n_layers = 0;
            cfg.vision.pooling = Pooling::GlobalAverage;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.kind.uses_text() {
            if let Err(Error::Config { problems: p }) = self.text.validate() {
                problems.extend(p.into_iter().map(|s| format!("text: {s}")));
            }
        }
        if self.kind.uses_image() {
            if let Err(Error::Config { problems: p }) = self.vision.validate() {
                problems.extend(p.into_iter().map(|s| format!("vision: {s}")));
            }
        }
        match self.kind {
            ModelKind::EarlyFusion | ModelKind::IntermediateFusion => {
                if self.fusion.d_fuse == 0 {
                    problems.push("fusion: d_fuse must be positive".to_string());
                }
                if !(0.0..1.0).contains(&self.fusion.dropout) {
                    problems.push(format!(
                        "fusion: dropout {} must lie in [0, 1)",
                        self.fusion.dropout
                    ));
                }
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }

    /// Closed-form total parameter count of the assembled model.
    pub fn param_count(&self) -> usize {
        let cfg = self.normalized();
        let c = IntentLabel::COUNT;
        let (dt, dv, df) = (cfg.text.d_model, cfg.vision.d_model, cfg.fusion.d_fuse);
        let text = if cfg.kind.uses_text() {
            cfg.text.param_count()
        } else {
            0
        };
        let vision = if cfg.kind.uses_image() {
            cfg.vision.param_count()
        } else {
            0
        };
        let head = match cfg.kind {
            ModelKind::TextOnly => c * dt + c,
            ModelKind::ImageOnly => c * dv + c,
            ModelKind::EarlyFusion => (df * dt) + (df * dv) + df + (c * df + c),
            ModelKind::IntermediateFusion => df * (dt + dv) + df + (c * df + c),
            ModelKind::LateFusion => {
                let branches = (c * dt + c) + (c * dv + c);
                let blend = match cfg.fusion.late_combiner {
                    LateCombiner::Scalar => 2,
                    LateCombiner::Matrix => 2 * c * c,
                };
                branches + blend + c
            }
        };
        text + vision + head
    }
}

/// One sample's model-ready inputs. Unimodal models only read their own
/// modality; fusion models require both.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    /// Prepared token ids: CLS-prefixed, within the encoder's max length.
    pub tokens: Option<&'a [usize]>,
    /// Preprocessed image: a normalized `[3, S, S]` tensor.
    pub pixels: Option<&'a Tensor>,
}

impl<'a> ModelInput<'a> {
    pub fn text(tokens: &'a [usize]) -> Self {
        ModelInput {
            tokens: Some(tokens),
            pixels: None,
        }
    }

    pub fn image(pixels: &'a Tensor) -> Self {
        ModelInput {
            tokens: None,
            pixels: Some(pixels),
        }
    }

    pub fn both(tokens: &'a [usize], pixels: &'a Tensor) -> Self {
        ModelInput {
            tokens: Some(tokens),
            pixels: Some(pixels),
        }
    }
}

enum Head {
    Unimodal {
        w: ParamId,
        b: ParamId,
    },
    Early {
        w_text: ParamId,
        w_image: ParamId,
        b: ParamId,
        out_w: ParamId,
        out_b: ParamId,
    },
    Intermediate {
        w: ParamId,
        b: ParamId,
        out_w: ParamId,
        out_b: ParamId,
    },
    Late {
        text_w: ParamId,
        text_b: ParamId,
        image_w: ParamId,
        image_b: ParamId,
        blend_text: ParamId,
        blend_image: ParamId,
        blend_b: ParamId,
        combiner: LateCombiner,
    },
}

/// The assembled classifier: encoders as the kind requires, plus a head.
pub struct IntentModel {
    cfg: ModelConfig,
    text: Option<TextEncoder>,
    vision: Option<VisionEncoder>,
    head: Head,
}

impl IntentModel {
    /// Registers every parameter of a model of `cfg.kind` and returns the
    /// handle set. Registration order (text encoder, vision encoder,
    /// head) fixes the RNG stream, so equal seeds give equal weights.
    pub fn init(cfg: ModelConfig, params: &mut Params, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let cfg = cfg.normalized();
        let c = IntentLabel::COUNT;
        let (dt, dv, df) = (cfg.text.d_model, cfg.vision.d_model, cfg.fusion.d_fuse);
        let text = if cfg.kind.uses_text() {
            Some(TextEncoder::init(
                cfg.text.clone(),
                "text",
                params,
                &mut *rng,
            )?)
        } else {
            None
        };
        let vision = if cfg.kind.uses_image() {
            Some(VisionEncoder::init(
                cfg.vision.clone(),
                "vision",
                params,
                &mut *rng,
            )?)
        } else {
            None
        };
        let zeros = |params: &mut Params, name: &str, n: usize| {
            params.register(name, Tensor::zeros(vec![n]), false)
        };
        let head = match cfg.kind {
            ModelKind::TextOnly => Head::Unimodal {
                w: weight(params, "head.w".into(), vec![c, dt], &mut *rng)?,
                b: zeros(params, "head.b", c)?,
            },
            ModelKind::ImageOnly => Head::Unimodal {
                w: weight(params, "head.w".into(), vec![c, dv], &mut *rng)?,
                b: zeros(params, "head.b", c)?,
            },
            ModelKind::EarlyFusion => Head::Early {
                w_text: weight(params, "head.fuse.text_w".into(), vec![df, dt], &mut *rng)?,
                w_image: weight(params, "head.fuse.image_w".into(), vec![df, dv], &mut *rng)?,
                b: zeros(params, "head.fuse.b", df)?,
                out_w: weight(params, "head.out.w".into(), vec![c, df], &mut *rng)?,
                out_b: zeros(params, "head.out.b", c)?,
            },
            ModelKind::IntermediateFusion => Head::Intermediate {
                w: weight(params, "head.fuse.w".into(), vec![df, dt + dv], &mut *rng)?,
                b: zeros(params, "head.fuse.b", df)?,
                out_w: weight(params, "head.out.w".into(), vec![c, df], &mut *rng)?,
                out_b: zeros(params, "head.out.b", c)?,
            },
            ModelKind::LateFusion => {
                let text_w = weight(params, "head.text.w".into(), vec![c, dt], &mut *rng)?;
                let text_b = zeros(params, "head.text.b", c)?;
                let image_w = weight(params, "head.image.w".into(), vec![c, dv], &mut *rng)?;
                let image_b = zeros(params, "head.image.b", c)?;
                let (blend_text, blend_image) = match cfg.fusion.late_combiner {
                    LateCombiner::Scalar => (
                        params.register("head.blend.text", Tensor::scalar(1.0), false)?,
                        params.register("head.blend.image", Tensor::scalar(1.0), false)?,
                    ),
                    LateCombiner::Matrix => (
                        params.register("head.blend.text", identity_matrix(c), false)?,
                        params.register("head.blend.image", identity_matrix(c), false)?,
                    ),
                };
                Head::Late {
                    text_w,
                    text_b,
                    image_w,
                    image_b,
                    blend_text,
                    blend_image,
                    blend_b: zeros(params, "head.blend.b", c)?,
                    combiner: cfg.fusion.late_combiner,
                }
            }
        };
        Ok(IntentModel {
            cfg,
            text,
            vision,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn kind(&self) -> ModelKind {
        self.cfg.kind
    }

    fn text_encoder(&self) -> &TextEncoder {
        self.text.as_ref().expect("kind guarantees a text encoder")
    }

    fn vision_encoder(&self) -> &VisionEncoder {
        self.vision
            .as_ref()
            .expect("kind guarantees a vision encoder")
    }

    fn require_tokens<'a>(&self, input: &ModelInput<'a>) -> Result<&'a [usize]> {
        input.tokens.ok_or_else(|| {
            Error::contract(
                "IntentModel::logits",
                format!("{} input needs token ids", self.cfg.kind.name()),
            )
        })
    }

    fn require_pixels<'a>(&self, input: &ModelInput<'a>) -> Result<&'a Tensor> {
        input.pixels.ok_or_else(|| {
            Error::contract(
                "IntentModel::logits",
                format!("{} input needs an image tensor", self.cfg.kind.name()),
            )
        })
    }

    /// Computes unnormalized class scores (`[6]`) for one sample.
    pub fn logits(
        &self,
        g: &mut Graph,
        params: &Params,
        input: &ModelInput,
        training: bool,
    ) -> Result<TensorId> {
        match &self.head {
            Head::Unimodal { w, b } => {
                let feat = match self.cfg.kind {
                    ModelKind::TextOnly => {
                        let ids = self.require_tokens(input)?;
                        self.text_encoder().forward(g, params, ids, training)?.deep
                    }
                    _ => {
                        let pixels = self.require_pixels(input)?;
                        self.vision_encoder()
                            .forward(g, params, pixels, training)?
                            .deep
                    }
                };
                linear(g, params, *w, *b, feat)
            }
            Head::Early {
                w_text,
                w_image,
                b,
                out_w,
                out_b,
            } => {
                let ids = self.require_tokens(input)?;
                let pixels = self.require_pixels(input)?;
                let t = self
                    .text_encoder()
                    .forward(g, params, ids, training)?
                    .shallow;
                let i = self
                    .vision_encoder()
                    .forward(g, params, pixels, training)?
                    .shallow;
                let wt = g.param(params, *w_text);
                let wi = g.param(params, *w_image);
                let bb = g.param(params, *b);
                let sum = g.matvec(wt, t)?;
                let sum2 = g.matvec(wi, i)?;
                let sum = g.add(sum, sum2)?;
                let pre = g.add(sum, bb)?;
                let z = g.activation(pre, self.cfg.fusion.activation);
                let z = g.dropout(z, self.cfg.fusion.dropout, training)?;
                linear(g, params, *out_w, *out_b, z)
            }
            Head::Intermediate { w, b, out_w, out_b } => {
                let ids = self.require_tokens(input)?;
                let pixels = self.require_pixels(input)?;
                let t = self.text_encoder().forward(g, params, ids, training)?.deep;
                let i = self
                    .vision_encoder()
                    .forward(g, params, pixels, training)?
                    .deep;
                let cat = g.concat_cols(t, i)?;
                let ww = g.param(params, *w);
                let bb = g.param(params, *b);
                let pre = g.matvec(ww, cat)?;
                let pre = g.add(pre, bb)?;
                let z = g.activation(pre, self.cfg.fusion.activation);
                let z = g.dropout(z, self.cfg.fusion.dropout, training)?;
                linear(g, params, *out_w, *out_b, z)
            }
            Head::Late {
                text_w,
                text_b,
                image_w,
                image_b,
                blend_text,
                blend_image,
                blend_b,
                combiner,
            } => {
                let ids = self.require_tokens(input)?;
                let pixels = self.require_pixels(input)?;
                let t = self.text_encoder().forward(g, params, ids, training)?.deep;
                let i = self
                    .vision_encoder()
                    .forward(g, params, pixels, training)?
                    .deep;
                let lt = linear(g, params, *text_w, *text_b, t)?;
                let li = linear(g, params, *image_w, *image_b, i)?;
                let wt = g.param(params, *blend_text);
                let wi = g.param(params, *blend_image);
                let (bt, bi) = match combiner {
                    LateCombiner::Scalar => (g.scale_by(lt, wt)?, g.scale_by(li, wi)?),
                    LateCombiner::Matrix => (g.matvec(wt, lt)?, g.matvec(wi, li)?),
                };
                let sum = g.add(bt, bi)?;
                let bb = g.param(params, *blend_b);
                let pre = g.add(sum, bb)?;
                Ok(g.activation(pre, self.cfg.fusion.activation))
            }
        }
    }

    /// Cross-entropy loss of one labeled sample.
    pub fn loss(
        &self,
        g: &mut Graph,
        params: &Params,
        input: &ModelInput,
        label: IntentLabel,
        training: bool,
    ) -> Result<TensorId> {
        let logits = self.logits(g, params, input, training)?;
        g.cross_entropy_logits(logits, label.index())
    }
}

fn linear(g: &mut Graph, params: &Params, w: ParamId, b: ParamId, x: TensorId) -> Result<TensorId> {
    let ww = g.param(params, w);
    let bb = g.param(params, b);
    let y = g.matvec(ww, x)?;
    g.add(y, bb)
}

fn identity_matrix(n: usize) -> Tensor {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    Tensor::new(vec![n, n], data).expect("shape matches data")
}

/// Numerically stable softmax over raw class scores. All-equal scores
/// (for example, an untrained all-zero head) give the uniform
/// distribution.
pub fn softmax_probs(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the highest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}
