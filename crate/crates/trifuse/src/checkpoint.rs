//! Self-contained model checkpoints.
//!
//! A checkpoint is a tensor container (see [`crate::tensor::checkpoint`])
//! holding every parameter plus one `__meta__` pseudo-tensor: a UTF-8
//! `key=value` document (each byte stored as an f64) recording the model
//! configuration, the label order, the preprocessing settings, and the
//! vocabulary. Loading rebuilds the exact model; values round-trip
//! bit-exactly. The same `key=value` schema serves run-config files, so
//! the helpers for applying and rendering model keys live here.

use crate::error::{Error, Result};
use crate::fusion::{IntentLabel, IntentModel, LateCombiner, ModelConfig, ModelKind};
use crate::tensor::{load_tensors, save_tensors, Activation, Params, Tensor};
use crate::text::Vocab;
use crate::vision::{Pooling, PreprocessConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;

/// Bumped if the metadata schema ever changes incompatibly.
const FORMAT: &str = "intent-checkpoint-v1";
const META_ENTRY: &str = "__meta__";

type KeyOutcome = Option<std::result::Result<(), String>>;

/// Everything needed to rebuild and reuse a trained model.
pub struct Checkpoint {
    pub model: ModelConfig,
    pub preprocess: PreprocessConfig,
    pub vocab: Vocab,
    /// `(name, tensor)` pairs as produced by training snapshots.
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = self.meta_document();
        let bytes: Vec<f64> = meta.bytes().map(f64::from).collect();
        let meta_tensor = Tensor::new(vec![bytes.len()], bytes)?;
        let mut entries: Vec<(String, &Tensor)> = vec![(META_ENTRY.to_string(), &meta_tensor)];
        entries.extend(self.tensors.iter().map(|(n, t)| (n.clone(), t)));
        save_tensors(path, &entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut tensors = load_tensors(path)?;
        let pos = tensors
            .iter()
            .position(|(name, _)| name == META_ENTRY)
            .ok_or_else(|| Error::checkpoint("file has no metadata entry".to_string()))?;
        let (_, meta_tensor) = tensors.remove(pos);
        let mut bytes = Vec::with_capacity(meta_tensor.data().len());
        for &v in meta_tensor.data() {
            if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                return Err(Error::checkpoint(
                    "metadata entry is not a byte stream".to_string(),
                ));
            }
            bytes.push(v as u8);
        }
        let meta = String::from_utf8(bytes)
            .map_err(|_| Error::checkpoint("metadata is not valid UTF-8".to_string()))?;
        let (model, preprocess, vocab) = parse_meta(&meta)?;
        Ok(Checkpoint {
            model,
            preprocess,
            vocab,
            tensors,
        })
    }

    /// Rebuilds the model and loads the stored parameter values into a
    /// fresh parameter set.
    pub fn build_model(&self) -> Result<(IntentModel, Params)> {
        let mut params = Params::new();
        // Any seed works: every initialized value is overwritten below.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = IntentModel::init(self.model.clone(), &mut params, &mut rng)?;
        params.load_values(&self.tensors)?;
        Ok((model, params))
    }

    fn meta_document(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format={FORMAT}");
        let _ = writeln!(out, "strategy={}", self.model.kind.name());
        let _ = writeln!(out, "labels={}", label_list());
        for line in model_kv_lines(&self.model) {
            let _ = writeln!(out, "{line}");
        }
        for line in preprocess_kv_lines("preprocess", &self.preprocess) {
            let _ = writeln!(out, "{line}");
        }
        let _ = writeln!(out, "vocab={}", self.vocab.ordered_tokens().join(" "));
        out
    }
}

fn label_list() -> String {
    IntentLabel::names().map(str::to_lowercase).join(",")
}

fn parse_meta(meta: &str) -> Result<(ModelConfig, PreprocessConfig, Vocab)> {
    let bad = |details: String| Error::checkpoint(details);
    let mut lines = meta.lines();
    match lines.next().and_then(|l| l.strip_prefix("format=")) {
        Some(FORMAT) => {}
        Some(other) => {
            return Err(bad(format!(
                "format {other:?} is not the supported {FORMAT:?}"
            )))
        }
        None => return Err(bad("metadata does not start with a format line".to_string())),
    }

    let mut model: Option<ModelConfig> = None;
    let mut preprocess = PreprocessConfig::default();
    let mut vocab: Option<Vocab> = None;
    for line in lines {
        let Some((key, value)) = line.split_once('=') else {
            return Err(bad(format!("metadata line {line:?} is not key=value")));
        };
        match key {
            "strategy" => {
                let kind = ModelKind::parse(value).map_err(|e| bad(e.to_string()))?;
                model = Some(ModelConfig::new(kind));
            }
            "labels" => {
                if value != label_list() {
                    return Err(bad(format!(
                        "label set mismatch: checkpoint has [{value}], this build has [{}]",
                        label_list()
                    )));
                }
            }
            "vocab" => {
                let tokens = value.split_whitespace().map(str::to_string).collect();
                vocab = Some(Vocab::from_ordered_tokens(tokens).map_err(|e| bad(e.to_string()))?);
            }
            _ => {
                let claimed = if let Some(rest) = key.strip_prefix("preprocess.") {
                    apply_preprocess_key(&mut preprocess, rest, value)
                } else if let Some(cfg) = model.as_mut() {
                    apply_model_key(cfg, key, value)
                } else {
                    return Err(bad(format!(
                        "model key {key:?} appears before the strategy line"
                    )));
                };
                match claimed {
                    Some(Ok(())) => {}
                    Some(Err(problem)) => return Err(bad(format!("{key}: {problem}"))),
                    None => return Err(bad(format!("unknown metadata key {key:?}"))),
                }
            }
        }
    }
    let model = model.ok_or_else(|| bad("metadata is missing the strategy".to_string()))?;
    let vocab = vocab.ok_or_else(|| bad("metadata is missing the vocabulary".to_string()))?;
    if model.kind.uses_text() && model.text.vocab_size != vocab.size() {
        return Err(bad(format!(
            "vocabulary has {} ids but the text encoder expects {}",
            vocab.size(),
            model.text.vocab_size
        )));
    }
    Ok((model, preprocess, vocab))
}

/// `model.*` lines fully describing `cfg` (strategy is kept separate).
pub fn model_kv_lines(cfg: &ModelConfig) -> Vec<String> {
    let t = &cfg.text;
    let v = &cfg.vision;
    let f = &cfg.fusion;
    vec![
        format!("model.text.vocab_size={}", t.vocab_size),
        format!("model.text.d_model={}", t.d_model),
        format!("model.text.n_layers={}", t.n_layers),
        format!("model.text.n_heads={}", t.n_heads),
        format!("model.text.max_len={}", t.max_len),
        format!("model.text.dropout={}", t.dropout),
        format!("model.text.activation={}", t.activation.name()),
        format!("model.text.ln_eps={}", t.ln_eps),
        format!("model.vision.image_size={}", v.image_size),
        format!("model.vision.patch_size={}", v.patch_size),
        format!("model.vision.d_model={}", v.d_model),
        format!("model.vision.n_layers={}", v.n_layers),
        format!("model.vision.n_heads={}", v.n_heads),
        format!("model.vision.dropout={}", v.dropout),
        format!("model.vision.activation={}", v.activation.name()),
        format!("model.vision.ln_eps={}", v.ln_eps),
        format!("model.vision.pooling={}", v.pooling.name()),
        format!("model.fusion.d_fuse={}", f.d_fuse),
        format!("model.fusion.dropout={}", f.dropout),
        format!("model.fusion.activation={}", f.activation.name()),
        format!("model.fusion.late_combiner={}", f.late_combiner.name()),
    ]
}

/// Applies one `model.*` key. `None` means the key is not a model key;
/// `Some(Err(problem))` reports a bad value or unknown model sub-key.
pub fn apply_model_key(cfg: &mut ModelConfig, key: &str, value: &str) -> KeyOutcome {
    let rest = key.strip_prefix("model.")?;
    let outcome = match rest {
        "text.vocab_size" => set_parsed(&mut cfg.text.vocab_size, value),
        "text.d_model" => set_parsed(&mut cfg.text.d_model, value),
        "text.n_layers" => set_parsed(&mut cfg.text.n_layers, value),
        "text.n_heads" => set_parsed(&mut cfg.text.n_heads, value),
        "text.max_len" => set_parsed(&mut cfg.text.max_len, value),
        "text.dropout" => set_parsed(&mut cfg.text.dropout, value),
        "text.activation" => set_via(&mut cfg.text.activation, value, Activation::parse),
        "text.ln_eps" => set_parsed(&mut cfg.text.ln_eps, value),
        "vision.image_size" => set_parsed(&mut cfg.vision.image_size, value),
        "vision.patch_size" => set_parsed(&mut cfg.vision.patch_size, value),
        "vision.d_model" => set_parsed(&mut cfg.vision.d_model, value),
        "vision.n_layers" => set_parsed(&mut cfg.vision.n_layers, value),
        "vision.n_heads" => set_parsed(&mut cfg.vision.n_heads, value),
        "vision.dropout" => set_parsed(&mut cfg.vision.dropout, value),
        "vision.activation" => set_via(&mut cfg.vision.activation, value, Activation::parse),
        "vision.ln_eps" => set_parsed(&mut cfg.vision.ln_eps, value),
        "vision.pooling" => set_via(&mut cfg.vision.pooling, value, Pooling::parse),
        "fusion.d_fuse" => set_parsed(&mut cfg.fusion.d_fuse, value),
        "fusion.dropout" => set_parsed(&mut cfg.fusion.dropout, value),
        "fusion.activation" => set_via(&mut cfg.fusion.activation, value, Activation::parse),
        "fusion.late_combiner" => {
            set_via(&mut cfg.fusion.late_combiner, value, LateCombiner::parse)
        }
        _ => Err(format!("unknown model key {key:?}")),
    };
    Some(outcome)
}

/// `{prefix}.*` lines describing preprocessing settings.
pub fn preprocess_kv_lines(prefix: &str, p: &PreprocessConfig) -> Vec<String> {
    vec![
        format!("{prefix}.target_size={}", p.target_size),
        format!("{prefix}.blur={}", p.blur),
        format!("{prefix}.sharpen={}", p.sharpen),
        format!("{prefix}.mean={}", triplet(&p.mean)),
        format!("{prefix}.std={}", triplet(&p.std)),
    ]
}

/// Applies one preprocessing key (already stripped of its prefix).
pub fn apply_preprocess_key(p: &mut PreprocessConfig, key: &str, value: &str) -> KeyOutcome {
    let outcome = match key {
        "target_size" => set_parsed(&mut p.target_size, value),
        "blur" => set_bool(&mut p.blur, value),
        "sharpen" => set_bool(&mut p.sharpen, value),
        "mean" => set_triplet(&mut p.mean, value),
        "std" => set_triplet(&mut p.std, value),
        _ => return None,
    };
    Some(outcome)
}

fn triplet(v: &[f64; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

pub(crate) fn set_parsed<T: std::str::FromStr>(
    slot: &mut T,
    value: &str,
) -> std::result::Result<(), String>
where
    T::Err: std::fmt::Display,
{
    match value.parse::<T>() {
        Ok(v) => {
            *slot = v;
            Ok(())
        }
        Err(e) => Err(format!("cannot parse {value:?}: {e}")),
    }
}

fn set_via<T>(
    slot: &mut T,
    value: &str,
    parse: impl Fn(&str) -> Result<T>,
) -> std::result::Result<(), String> {
    match parse(value) {
        Ok(v) => {
            *slot = v;
            Ok(())
        }
        Err(e) => Err(e.to_string()),
    }
}

pub(crate) fn set_bool(slot: &mut bool, value: &str) -> std::result::Result<(), String> {
    match value {
        "true" => {
            *slot = true;
            Ok(())
        }
        "false" => {
            *slot = false;
            Ok(())
        }
        other => Err(format!("expected true or false, got {other:?}")),
    }
}

fn set_triplet(slot: &mut [f64; 3], value: &str) -> std::result::Result<(), String> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected three comma-separated numbers, got {value:?}"
        ));
    }
    let mut out = [0.0; 3];
    for (o, part) in out.iter_mut().zip(&parts) {
        *o = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("cannot parse {part:?}: {e}"))?;
    }
    *slot = out;
    Ok(())
}
