//! Training: LR schedule, AdamW, early stopping, and the epoch loop.
//!
//! The optimizer is AdamW with *decoupled* weight decay: the decay term
//! `lr * wd * w` is subtracted directly from the weight and never enters
//! the moment estimates, and parameters registered with `decay = false`
//! (biases, layernorm gains, blend weights) are exempt. The learning
//! rate ramps linearly from zero to the peak over the warmup steps, then
//! decays linearly back to zero at the final step.
//!
//! Model selection and early stopping both watch validation macro-F1:
//! the best checkpoint is the earliest epoch with the strictly highest
//! score, and training stops once `patience` epochs pass without an
//! improvement of more than `min_delta`.

use crate::error::{Error, Result};
use crate::fusion::{argmax, IntentLabel, IntentModel, ModelInput};
use crate::metrics::ConfusionMatrix;
use crate::tensor::{Graph, Params, Tensor};
use crate::vision::{augment, preprocess, Image, PreprocessConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

/// Hyperparameters of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    /// Fraction of total optimizer steps spent ramping up; used when
    /// `warmup_steps` is not set explicitly.
    pub warmup_frac: f64,
    /// Explicit warmup step count, overriding `warmup_frac`.
    pub warmup_steps: Option<usize>,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Epochs without a `min_delta` improvement before stopping.
    pub patience: usize,
    pub min_delta: f64,
    /// Jitter training images (rotation, flip, brightness) each epoch.
    pub augment_images: bool,
    pub preprocess: PreprocessConfig,
    /// Seed for shuffling, augmentation, and dropout streams.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            peak_lr: 2e-5,
            warmup_frac: 0.1,
            warmup_steps: None,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            patience: 10,
            min_delta: 1e-4,
            augment_images: true,
            preprocess: PreprocessConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.epochs == 0 {
            problems.push("epochs must be positive".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".to_string());
        }
        if !(self.peak_lr > 0.0) {
            problems.push(format!("peak_lr {} must be positive", self.peak_lr));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            problems.push(format!(
                "warmup_frac {} must lie in [0, 1]",
                self.warmup_frac
            ));
        }
        if self.weight_decay < 0.0 {
            problems.push(format!(
                "weight_decay {} must be non-negative",
                self.weight_decay
            ));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                problems.push(format!("{name} {beta} must lie in [0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            problems.push(format!("eps {} must be positive", self.eps));
        }
        if self.patience == 0 {
            problems.push("patience must be at least 1".to_string());
        }
        if self.min_delta < 0.0 {
            problems.push(format!("min_delta {} must be non-negative", self.min_delta));
        }
        if let Err(Error::Config { problems: p }) = self.preprocess.validate() {
            problems.extend(p.into_iter().map(|s| format!("preprocess: {s}")));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }

    /// Warmup step count for a run of `total_steps` optimizer steps:
    /// the explicit `warmup_steps` when set, otherwise `warmup_frac` of
    /// the total, clamped to the run length either way.
    pub fn warmup_for(&self, total_steps: usize) -> usize {
        self.warmup_steps
            .unwrap_or_else(|| (total_steps as f64 * self.warmup_frac).round() as usize)
            .min(total_steps)
    }
}

/// Learning rate at a 1-based optimizer step: linear warmup from zero to
/// `peak_lr` at `warmup_steps`, then linear decay to zero at
/// `total_steps`. Step 0 (before any update) is defined as zero.
pub fn lr_at(step: usize, total_steps: usize, warmup_steps: usize, peak_lr: f64) -> f64 {
    if step == 0 || total_steps == 0 {
        return 0.0;
    }
    let step = step.min(total_steps);
    if step <= warmup_steps {
        return peak_lr * (step as f64 / warmup_steps as f64);
    }
    let decay_span = total_steps - warmup_steps;
    if decay_span == 0 {
        return peak_lr;
    }
    peak_lr * ((total_steps - step) as f64 / decay_span as f64)
}

/// First and second moment estimates, one pair per parameter.
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u32,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        let m = params
            .ids()
            .map(|id| vec![0.0; params.get(id).data().len()])
            .collect::<Vec<_>>();
        AdamState {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u32 {
        self.t
    }
}

/// One AdamW update over every parameter, reading `grad` buffers filled
/// by the backward pass. Fails with [`Error::Diverged`] if any gradient
/// is non-finite, naming the offending parameter.
pub fn adam_step(
    params: &mut Params,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let name = params.name(id).to_string();
        let decays = params.decays(id);
        let tensor = params.get_mut(id);
        let grad = tensor.grad().ok_or_else(|| {
            Error::contract("adam_step", format!("parameter {name} has no gradient"))
        })?;
        if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                details: format!("non-finite gradient {bad} in parameter {name}"),
            });
        }
        let grad = grad.to_vec();
        let m = &mut state.m[id.0];
        let v = &mut state.v[id.0];
        let data = tensor.data_mut();
        for i in 0..data.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let mut update = m_hat / (v_hat.sqrt() + cfg.eps);
            if decays {
                update += cfg.weight_decay * data[i];
            }
            data[i] -= lr * update;
        }
    }
    Ok(())
}

/// Early-stopping rule over the per-epoch validation scores seen so far:
/// stop once the latest epoch is `patience` or more epochs past the last
/// improvement of more than `min_delta`.
pub fn should_stop(val_scores: &[f64], patience: usize, min_delta: f64) -> bool {
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0usize;
    for (i, &s) in val_scores.iter().enumerate() {
        if s > best + min_delta || i == 0 {
            best = s;
            best_idx = i;
        }
    }
    !val_scores.is_empty() && val_scores.len() - 1 - best_idx >= patience
}

/// One labeled sample in model-ready form (tokens already CLS-prefixed
/// and truncated; the image still raw so augmentation can jitter it).
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub id: String,
    pub label: IntentLabel,
    pub tokens: Vec<usize>,
    pub image: Option<Image>,
}

/// Per-epoch numbers, as written to the history table.
#[derive(Debug, Clone, Copy)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub train_macro_f1: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
    pub lr: f64,
}

/// Outcome of a training run.
pub struct TrainReport {
    pub history: Vec<EpochRow>,
    /// 1-based epoch whose weights are in `best_params`.
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub stopped_early: bool,
    /// Snapshot of every parameter at the best epoch.
    pub best_params: Vec<(String, Tensor)>,
}

impl TrainReport {
    /// Tab-separated history with a header row; floats use their
    /// shortest round-trip form.
    pub fn history_tsv(&self) -> String {
        let mut out =
            String::from("epoch\ttrain_loss\ttrain_acc\ttrain_f1\tval_loss\tval_acc\tval_f1\tlr\n");
        for r in &self.history {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.epoch,
                r.train_loss,
                r.train_accuracy,
                r.train_macro_f1,
                r.val_loss,
                r.val_accuracy,
                r.val_macro_f1,
                r.lr
            );
        }
        out
    }
}

fn snapshot(params: &Params) -> Vec<(String, Tensor)> {
    params
        .iter()
        .map(|(name, t)| (name.to_string(), t.clone()))
        .collect()
}

/// Prepares one sample's image for a forward pass.
fn sample_pixels(
    example: &TrainExample,
    cfg: &TrainConfig,
    jitter: Option<&mut ChaCha8Rng>,
) -> Result<Option<Tensor>> {
    match &example.image {
        None => Ok(None),
        Some(img) => {
            let processed = match jitter {
                Some(rng) => preprocess(&augment(img, rng), &cfg.preprocess)?,
                None => preprocess(img, &cfg.preprocess)?,
            };
            Ok(Some(processed))
        }
    }
}

fn model_input<'a>(
    model: &IntentModel,
    example: &'a TrainExample,
    pixels: &'a Option<Tensor>,
) -> Result<ModelInput<'a>> {
    let kind = model.kind();
    if kind.uses_image() && pixels.is_none() {
        return Err(Error::data(format!(
            "sample {} has no image but model kind {} needs one",
            example.id,
            kind.name()
        )));
    }
    Ok(ModelInput {
        tokens: kind.uses_text().then_some(example.tokens.as_slice()),
        pixels: pixels.as_ref().filter(|_| kind.uses_image()),
    })
}

/// Mean loss and confusion matrix of `model` over `samples`, with
/// dropout off and no augmentation.
pub fn evaluate(
    model: &IntentModel,
    params: &Params,
    samples: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<(f64, ConfusionMatrix)> {
    if samples.is_empty() {
        return Err(Error::data("evaluate: no samples"));
    }
    let mut cm = ConfusionMatrix::new(IntentLabel::COUNT);
    let mut total_loss = 0.0;
    for example in samples {
        let pixels = sample_pixels(example, cfg, None)?;
        let input = model_input(model, example, &pixels)?;
        let mut g = Graph::new(0);
        let logits = model.logits(&mut g, params, &input, false)?;
        let loss = g.cross_entropy_logits(logits, example.label.index())?;
        total_loss += g.value(loss)[0];
        cm.record(example.label.index(), argmax(g.value(logits)))?;
    }
    Ok((total_loss / samples.len() as f64, cm))
}

/// Runs the full training loop, returning the per-epoch history and the
/// best-epoch parameter snapshot. `params` is left at the *last* epoch's
/// weights; restore `best_params` for evaluation.
pub fn train(
    model: &IntentModel,
    params: &mut Params,
    train_set: &[TrainExample],
    val_set: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::data("train: empty train or validation split"));
    }
    if model.kind().uses_image() {
        let want = model.config().vision.image_size;
        if cfg.preprocess.target_size != want {
            return Err(Error::Config {
                problems: vec![format!(
                    "preprocess target_size {} does not match the encoder image_size {want}",
                    cfg.preprocess.target_size
                )],
            });
        }
    }

    let batches_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let warmup_steps = cfg.warmup_for(total_steps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(params);
    let mut history: Vec<EpochRow> = Vec::new();
    let mut val_f1s: Vec<f64> = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_params = snapshot(params);
    let mut stopped_early = false;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let class_names = IntentLabel::names();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut train_cm = ConfusionMatrix::new(IntentLabel::COUNT);
        let mut last_lr = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut g = Graph::new(rng.gen());
            let mut losses = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let example = &train_set[idx];
                let jitter = cfg.augment_images.then_some(&mut rng);
                let pixels = sample_pixels(example, cfg, jitter)?;
                let input = model_input(model, example, &pixels)?;
                let logits = model.logits(&mut g, params, &input, true)?;
                train_cm.record(example.label.index(), argmax(g.value(logits)))?;
                let loss = g.cross_entropy_logits(logits, example.label.index())?;
                epoch_loss += g.value(loss)[0];
                losses.push(loss);
            }
            let batch_loss = g.mean_of(&losses)?;
            if !g.value(batch_loss)[0].is_finite() {
                return Err(Error::Diverged {
                    details: format!("non-finite loss at epoch {epoch} step {}", step + 1),
                });
            }
            g.backward(batch_loss)?;
            g.write_grads(params)?;
            step += 1;
            last_lr = lr_at(step, total_steps, warmup_steps, cfg.peak_lr);
            adam_step(params, &mut state, last_lr, cfg)?;
        }

        let (val_loss, val_cm) = evaluate(model, params, val_set, cfg)?;
        let train_report = train_cm.report("train", model.kind(), &class_names)?;
        let val_report = val_cm.report("val", model.kind(), &class_names)?;
        let row = EpochRow {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            train_accuracy: train_report.accuracy,
            train_macro_f1: train_report.macro_f1,
            val_loss,
            val_accuracy: val_report.accuracy,
            val_macro_f1: val_report.macro_f1,
            lr: last_lr,
        };
        history.push(row);
        val_f1s.push(row.val_macro_f1);

        // Strictly-better keeps the earliest epoch on ties.
        if row.val_macro_f1 > best_f1 {
            best_f1 = row.val_macro_f1;
            best_epoch = epoch;
            best_params = snapshot(params);
        }
        if should_stop(&val_f1s, cfg.patience, cfg.min_delta) {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainReport {
        history,
        best_epoch,
        best_val_macro_f1: best_f1,
        stopped_early,
        best_params,
    })
}
