//! Command-line interface: run-configuration files and the five commands
//! (`gen-data`, `train`, `eval`, `compare`, `gradcheck`).
//!
//! Each command is a thin orchestration over the library. Artifacts land
//! under the configured output directory, which the `TRIFUSE_OUTPUT_DIR`
//! environment variable overrides; `--seed` overrides the seed from the
//! config file or generation spec. Exit codes: 0 on success, 1 for invalid
//! inputs (config, manifest, or dataset problems), 2 for runtime failures.

use crate::checkpoint::{
    apply_model_key, apply_preprocess_key, model_kv_lines, preprocess_kv_lines, set_bool,
    set_parsed, Checkpoint,
};
use crate::data::{
    bayes_accuracies, build_vocab, gen_synthetic, load_manifest, prepare_examples, ManifestRow,
    Split, SplitSets, SynthSpec,
};
use crate::error::{Error, Result};
use crate::fusion::{IntentLabel, IntentModel, ModelConfig, ModelInput, ModelKind};
use crate::metrics::{render_comparison, EvalReport, Layout};
use crate::tensor::{check_gradients, GradCheckOptions, Params, Tensor};
use crate::text::{Vocab, CLS_ID};
use crate::trace::Trace;
use crate::train::{evaluate, train, TrainConfig, TrainReport};
use crate::vision::PreprocessConfig;
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable that overrides `output_dir` for every command.
pub const OUTPUT_DIR_ENV: &str = "TRIFUSE_OUTPUT_DIR";

/// Everything a training-style command needs, read from one `key=value`
/// config file. Dotted prefixes route to the nested configs: `model.*`,
/// `train.*`, and `train.preprocess.*`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Dataset directory (containing `manifest.tsv`) or a manifest path.
    pub dataset: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Echo per-sample preprocessing notes while loading.
    pub verbose: bool,
    /// Which model variant `train` fits; `compare` ignores it.
    pub strategy: ModelKind,
    /// Upper bound on vocabulary ids (reserved ids included) built from
    /// the training split; the actual size is whatever the corpus yields.
    pub vocab_budget: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Give each `compare` run its own seed instead of a shared one.
    pub decorrelate_seeds: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            output_dir: PathBuf::from("runs"),
            seed: 0,
            verbose: false,
            strategy: ModelKind::IntermediateFusion,
            vocab_budget: 512,
            model: ModelConfig::new(ModelKind::IntermediateFusion),
            train: TrainConfig::default(),
            decorrelate_seeds: false,
        }
    }
}

impl RunConfig {
    /// Parses a config document, collecting every problem (with `source`
    /// and line number) before failing so a bad file is fixed in one pass.
    pub fn parse(source: &str, contents: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut explicit_target_size = false;
        let mut problems = Vec::new();
        for (idx, raw) in contents.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!(
                    "{source} line {lineno}: expected key=value, found {line:?}"
                ));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            match apply_key(&mut cfg, &mut explicit_target_size, key, value) {
                Some(Ok(())) => {}
                Some(Err(detail)) => {
                    problems.push(format!("{source} line {lineno}: {key}: {detail}"));
                }
                None => problems.push(format!("{source} line {lineno}: unknown key {key:?}")),
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config { problems });
        }
        cfg.model.kind = cfg.strategy;
        cfg.train.seed = cfg.seed;
        if !explicit_target_size {
            cfg.train.preprocess.target_size = cfg.model.vision.image_size;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&path.display().to_string(), &contents)
    }

    /// Renders the configuration as a document `parse` accepts; the
    /// derived `model.text.vocab_size` is deliberately omitted.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        if let Some(dataset) = &self.dataset {
            let _ = writeln!(out, "dataset={}", dataset.display());
        }
        let _ = writeln!(out, "output_dir={}", self.output_dir.display());
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "verbose={}", self.verbose);
        let _ = writeln!(out, "strategy={}", self.strategy.name());
        let _ = writeln!(out, "vocab_size={}", self.vocab_budget);
        let _ = writeln!(out, "compare.decorrelate_seeds={}", self.decorrelate_seeds);
        for line in model_kv_lines(&self.model) {
            if !line.starts_with("model.text.vocab_size=") {
                let _ = writeln!(out, "{line}");
            }
        }
        let t = &self.train;
        let _ = writeln!(out, "train.epochs={}", t.epochs);
        let _ = writeln!(out, "train.batch_size={}", t.batch_size);
        let _ = writeln!(out, "train.peak_lr={}", t.peak_lr);
        let _ = writeln!(out, "train.warmup_frac={}", t.warmup_frac);
        if let Some(steps) = t.warmup_steps {
            let _ = writeln!(out, "train.warmup_steps={steps}");
        }
        let _ = writeln!(out, "train.weight_decay={}", t.weight_decay);
        let _ = writeln!(out, "train.beta1={}", t.beta1);
        let _ = writeln!(out, "train.beta2={}", t.beta2);
        let _ = writeln!(out, "train.eps={}", t.eps);
        let _ = writeln!(out, "train.patience={}", t.patience);
        let _ = writeln!(out, "train.min_delta={}", t.min_delta);
        let _ = writeln!(out, "train.augment_images={}", t.augment_images);
        for line in preprocess_kv_lines("train.preprocess", &t.preprocess) {
            let _ = writeln!(out, "{line}");
        }
        out
    }

    /// Applies the `--seed` flag and the output-dir environment override
    /// on top of the file contents.
    fn finalize(&mut self, seed_override: Option<u64>) {
        if let Some(seed) = seed_override {
            self.seed = seed;
            self.train.seed = seed;
        }
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
    }

    /// Checks everything that can be checked before the corpus is read.
    pub fn validate(&self, needs_dataset: bool) -> Result<()> {
        let mut problems = Vec::new();
        if needs_dataset && self.dataset.is_none() {
            problems.push("dataset: required key is missing".to_string());
        }
        if self.vocab_budget < 4 {
            problems.push(format!(
                "vocab_size {} leaves no room beyond the reserved ids",
                self.vocab_budget
            ));
        }
        for err in [self.train.validate().err(), self.model.validate().err()]
            .into_iter()
            .flatten()
        {
            match err {
                Error::Config { problems: sub } => problems.extend(sub),
                other => problems.push(other.to_string()),
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }
}

/// Routes one key to its slot. `None` means the key is unknown.
fn apply_key(
    cfg: &mut RunConfig,
    explicit_target_size: &mut bool,
    key: &str,
    value: &str,
) -> Option<std::result::Result<(), String>> {
    if let Some(rest) = key.strip_prefix("train.preprocess.") {
        if rest == "target_size" {
            *explicit_target_size = true;
        }
        return apply_preprocess_key(&mut cfg.train.preprocess, rest, value);
    }
    if key == "model.text.vocab_size" {
        return Some(Err(
            "derived from the training corpus at run time; cap it with the top-level \
             vocab_size key instead"
                .to_string(),
        ));
    }
    if let Some(outcome) = apply_train_key(&mut cfg.train, key, value) {
        return Some(outcome);
    }
    if let Some(outcome) = apply_model_key(&mut cfg.model, key, value) {
        return Some(outcome);
    }
    let outcome = match key {
        "dataset" => {
            cfg.dataset = Some(PathBuf::from(value));
            Ok(())
        }
        "output_dir" => {
            cfg.output_dir = PathBuf::from(value);
            Ok(())
        }
        "seed" => set_parsed(&mut cfg.seed, value),
        "verbose" => set_bool(&mut cfg.verbose, value),
        "strategy" => match ModelKind::parse(value) {
            Ok(kind) => {
                cfg.strategy = kind;
                Ok(())
            }
            Err(e) => Err(e.to_string()),
        },
        "vocab_size" => set_parsed(&mut cfg.vocab_budget, value),
        "compare.decorrelate_seeds" => set_bool(&mut cfg.decorrelate_seeds, value),
        _ => return None,
    };
    Some(outcome)
}

fn apply_train_key(
    train: &mut TrainConfig,
    key: &str,
    value: &str,
) -> Option<std::result::Result<(), String>> {
    let rest = key.strip_prefix("train.")?;
    let outcome = match rest {
        "epochs" => set_parsed(&mut train.epochs, value),
        "batch_size" => set_parsed(&mut train.batch_size, value),
        "peak_lr" => set_parsed(&mut train.peak_lr, value),
        "warmup_frac" => set_parsed(&mut train.warmup_frac, value),
        "warmup_steps" => {
            let mut steps = 0usize;
            set_parsed(&mut steps, value).map(|()| train.warmup_steps = Some(steps))
        }
        "weight_decay" => set_parsed(&mut train.weight_decay, value),
        "beta1" => set_parsed(&mut train.beta1, value),
        "beta2" => set_parsed(&mut train.beta2, value),
        "eps" => set_parsed(&mut train.eps, value),
        "patience" => set_parsed(&mut train.patience, value),
        "min_delta" => set_parsed(&mut train.min_delta, value),
        "augment_images" => set_bool(&mut train.augment_images, value),
        _ => return None,
    };
    Some(outcome)
}

#[derive(Parser, Debug)]
#[command(
    name = "trifuse",
    version,
    about = "Desk-scale multimodal author-intent classification"
)]
pub struct Cli {
    /// Overrides the seed from the config file or generation spec.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic planted-signal dataset.
    GenData {
        /// Generation spec (key=value file); built-in defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Directory receiving images/, manifest.tsv, and spec.kv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model; writes a checkpoint, history table, and report.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Restrict the model to one modality (overrides the strategy).
        #[arg(long, value_enum, default_value_t = Modality::Both)]
        modality: Modality,
    },
    /// Evaluate a checkpoint on every split of a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train all five model variants on one dataset and tabulate them.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check every parameter's gradient against finite differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Modality {
    Text,
    Image,
    Both,
}

/// Parses `std::env::args`, runs the command, and reports the exit code.
pub fn run() -> i32 {
    match execute(Cli::parse()) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { spec, out } => cmd_gen_data(spec.as_deref(), &out, cli.seed),
        Command::Train { config, modality } => cmd_train(&config, modality, cli.seed),
        Command::Eval {
            checkpoint,
            manifest,
        } => cmd_eval(&checkpoint, &manifest),
        Command::Compare { config } => cmd_compare(&config, cli.seed),
        Command::Gradcheck { config } => cmd_gradcheck(&config, cli.seed),
    }
}

pub fn cmd_gen_data(spec_path: Option<&Path>, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = match spec_path {
        Some(path) => SynthSpec::load(path)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let rows = gen_synthetic(&spec, out_dir)?;
    println!(
        "wrote {} samples (seed {}) to {}",
        rows.len(),
        spec.seed,
        out_dir.display()
    );
    println!();
    print!("{}", split_table(&rows));
    let bayes = bayes_accuracies(&spec)?;
    println!();
    println!(
        "bayes-optimal accuracy: text {:.4} | image {:.4} | joint {:.4} | fusion headroom {:+.4}",
        bayes.text,
        bayes.image,
        bayes.fused,
        bayes.gap()
    );
    Ok(())
}

pub fn cmd_train(config_path: &Path, modality: Modality, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config_path)?;
    cfg.finalize(seed);
    match modality {
        Modality::Text => cfg.strategy = ModelKind::TextOnly,
        Modality::Image => cfg.strategy = ModelKind::ImageOnly,
        Modality::Both => {}
    }
    cfg.model.kind = cfg.strategy;
    cfg.validate(true)?;
    let data = load_dataset(&mut cfg)?;
    println!(
        "loaded {} train / {} val / {} test samples ({} vocabulary ids)",
        data.sets.train.len(),
        data.sets.val.len(),
        data.sets.test.len(),
        data.vocab.size()
    );

    let started = Instant::now();
    let outcome = run_one(&cfg.train, cfg.model.clone(), &data, cfg.seed)?;
    print_run_summary(&outcome, started.elapsed().as_secs_f64());
    println!();
    print!("{}", outcome.eval.render());
    println!();

    let paths = save_artifacts(
        &cfg.output_dir,
        &cfg.train.preprocess,
        &data.vocab,
        &outcome,
    )?;
    println!("wrote {}", paths.join(", "));
    Ok(())
}

pub fn cmd_eval(checkpoint_path: &Path, manifest_path: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint_path)?;
    let (model, params) = ck.build_model()?;
    let rows = load_manifest(manifest_path)?;
    let base = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut trace = Trace::new(false);
    let sets = prepare_examples(&base, &rows, &ck.vocab, ck.model.text.max_len, &mut trace)?;
    let eval_cfg = TrainConfig {
        preprocess: ck.preprocess.clone(),
        ..TrainConfig::default()
    };
    let names = IntentLabel::names();
    println!(
        "checkpoint {} ({}, {} parameters)",
        checkpoint_path.display(),
        ck.model.kind.table_label(),
        params.numel()
    );
    let mut evaluated = false;
    for split in Split::ALL {
        let samples = sets.get(split);
        if samples.is_empty() {
            continue;
        }
        let (loss, cm) = evaluate(&model, &params, samples, &eval_cfg)?;
        let report = cm.report(
            format!("{} [{}]", ck.model.kind.name(), split.name()),
            ck.model.kind,
            &names,
        )?;
        println!();
        println!(
            "== {} split: {} samples, mean loss {:.4}",
            split.name(),
            samples.len(),
            loss
        );
        print!("{}", report.render());
        evaluated = true;
    }
    if !evaluated {
        return Err(Error::data("manifest contains no samples"));
    }
    Ok(())
}

pub fn cmd_compare(config_path: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config_path)?;
    cfg.finalize(seed);
    cfg.validate(true)?;
    let data = load_dataset(&mut cfg)?;
    println!(
        "loaded {} train / {} val / {} test samples ({} vocabulary ids)",
        data.sets.train.len(),
        data.sets.val.len(),
        data.sets.test.len(),
        data.vocab.size()
    );

    let total = ModelKind::ABLATION_ORDER.len();
    let mut reports = Vec::with_capacity(total);
    for (i, kind) in ModelKind::ABLATION_ORDER.into_iter().enumerate() {
        let mut model_cfg = cfg.model.clone();
        model_cfg.kind = kind;
        let run_seed = if cfg.decorrelate_seeds {
            cfg.seed.wrapping_add(i as u64)
        } else {
            cfg.seed
        };
        println!();
        println!(
            "[{}/{total}] training {} (seed {run_seed})",
            i + 1,
            kind.table_label()
        );
        let started = Instant::now();
        let outcome = match run_one(&cfg.train, model_cfg, &data, run_seed) {
            Ok(outcome) => outcome,
            Err(err) => {
                eprintln!(
                    "{} failed after {} completed runs; artifacts so far are in {}",
                    kind.table_label(),
                    reports.len(),
                    cfg.output_dir.display()
                );
                return Err(err);
            }
        };
        print_run_summary(&outcome, started.elapsed().as_secs_f64());
        save_artifacts(
            &cfg.output_dir,
            &cfg.train.preprocess,
            &data.vocab,
            &outcome,
        )?;
        reports.push(outcome.eval);
    }

    let table = render_comparison(&reports, Layout::Ablation)?;
    println!();
    print!("{table}");
    let table_path = cfg.output_dir.join("comparison.txt");
    write_text(&table_path, &table)?;
    println!();
    println!("wrote {}", table_path.display());
    Ok(())
}

pub fn cmd_gradcheck(config_path: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config_path)?;
    cfg.finalize(seed);
    cfg.validate(false)?;
    // No corpus here, so the budget is the vocabulary size.
    cfg.model.text.vocab_size = cfg.vocab_budget;
    cfg.model.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let content_len = cfg.model.text.max_len.saturating_sub(1).clamp(1, 6);
    let tokens: Vec<usize> = std::iter::once(CLS_ID)
        .chain((0..content_len).map(|_| rng.gen_range(3..cfg.model.text.vocab_size)))
        .collect();
    let side = cfg.model.vision.image_size;
    let pixels = Tensor::new(
        vec![3, side, side],
        (0..3 * side * side)
            .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
            .collect(),
    )?;

    let opts = GradCheckOptions::default();
    let started = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    for (i, kind) in ModelKind::ABLATION_ORDER.into_iter().enumerate() {
        let mut model_cfg = cfg.model.clone();
        model_cfg.kind = kind;
        let mut params = Params::new();
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        let model = IntentModel::init(model_cfg, &mut params, &mut init_rng)?;
        let input = match (kind.uses_text(), kind.uses_image()) {
            (true, true) => ModelInput::both(&tokens, &pixels),
            (true, false) => ModelInput::text(&tokens),
            (false, true) => ModelInput::image(&pixels),
            (false, false) => unreachable!("every model kind uses at least one modality"),
        };
        let label = IntentLabel::ALL[i % IntentLabel::COUNT];
        let report = check_gradients(
            &mut params,
            |g, p| model.loss(g, p, &input, label, false),
            &opts,
        )?;
        println!("== {} ({} parameters)", kind.table_label(), params.numel());
        print!("{}", report.render());
        println!();
        if !report.pass() {
            failures.extend(
                report
                    .failures()
                    .iter()
                    .map(|name| format!("{}: {name}", kind.name())),
            );
        }
    }
    if failures.is_empty() {
        println!(
            "all strategies match finite differences ({:.1}s)",
            started.elapsed().as_secs_f64()
        );
        Ok(())
    } else {
        Err(Error::contract(
            "gradcheck",
            format!(
                "gradients disagree with finite differences in: {}",
                failures.join(", ")
            ),
        ))
    }
}

/// A manifest read, vocab-encoded, and image-loaded, ready to train on.
pub struct LoadedDataset {
    pub vocab: Vocab,
    pub sets: SplitSets,
}

/// Reads the configured dataset and locks the text vocabulary size to
/// whatever the training split produced.
pub fn load_dataset(cfg: &mut RunConfig) -> Result<LoadedDataset> {
    let dataset = cfg.dataset.clone().ok_or_else(|| Error::Config {
        problems: vec!["dataset: required key is missing".to_string()],
    })?;
    let manifest = if dataset.is_dir() {
        dataset.join("manifest.tsv")
    } else {
        dataset
    };
    let rows = load_manifest(&manifest)?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let vocab = build_vocab(&rows, cfg.vocab_budget)?;
    cfg.model.text.vocab_size = vocab.size();
    cfg.model.validate()?;
    let mut trace = Trace::new(cfg.verbose);
    let sets = prepare_examples(&base, &rows, &vocab, cfg.model.text.max_len, &mut trace)?;
    if cfg.verbose {
        print!("{}", trace.render());
    }
    Ok(LoadedDataset { vocab, sets })
}

/// One model trained to its best epoch and scored on the test split.
pub struct RunOutcome {
    pub model_cfg: ModelConfig,
    pub param_count: usize,
    pub train_report: TrainReport,
    pub test_loss: f64,
    pub eval: EvalReport,
}

/// Initializes a model from `seed`, trains it to its best validation
/// epoch, and scores that snapshot on the test split. `compare` calls
/// this once per ablation row.
pub fn run_one(
    train_cfg_base: &TrainConfig,
    model_cfg: ModelConfig,
    data: &LoadedDataset,
    seed: u64,
) -> Result<RunOutcome> {
    let mut params = Params::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = IntentModel::init(model_cfg.clone(), &mut params, &mut rng)?;
    let param_count = params.numel();
    let mut train_cfg = train_cfg_base.clone();
    train_cfg.seed = seed;
    let train_report = train(
        &model,
        &mut params,
        &data.sets.train,
        &data.sets.val,
        &train_cfg,
    )?;
    params.load_values(&train_report.best_params)?;
    let (test_loss, cm) = evaluate(&model, &params, &data.sets.test, &train_cfg)?;
    let names = IntentLabel::names();
    let eval = cm.report(model_cfg.kind.name(), model_cfg.kind, &names)?;
    Ok(RunOutcome {
        model_cfg,
        param_count,
        train_report,
        test_loss,
        eval,
    })
}

fn print_run_summary(outcome: &RunOutcome, seconds: f64) {
    let report = &outcome.train_report;
    println!(
        "{}: {} parameters | best epoch {}/{} (val macro-F1 {:.4}{}) | \
         test loss {:.4} acc {:.4} macro-F1 {:.4} | {seconds:.1}s",
        outcome.model_cfg.kind.table_label(),
        outcome.param_count,
        report.best_epoch,
        report.history.len(),
        report.best_val_macro_f1,
        if report.stopped_early {
            ", stopped early"
        } else {
            ""
        },
        outcome.test_loss,
        outcome.eval.accuracy,
        outcome.eval.macro_f1,
    );
}

/// Writes `<kind>.ckpt`, `<kind>.history.tsv`, and `<kind>.report.txt`
/// under `out_dir`, returning the paths written.
fn save_artifacts(
    out_dir: &Path,
    preprocess: &PreprocessConfig,
    vocab: &Vocab,
    outcome: &RunOutcome,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stem = outcome.model_cfg.kind.name();

    let history_path = out_dir.join(format!("{stem}.history.tsv"));
    write_text(&history_path, &outcome.train_report.history_tsv())?;

    let report_path = out_dir.join(format!("{stem}.report.txt"));
    write_text(&report_path, &outcome.eval.render())?;

    let ckpt_path = out_dir.join(format!("{stem}.ckpt"));
    let checkpoint = Checkpoint {
        model: outcome.model_cfg.clone(),
        preprocess: preprocess.clone(),
        vocab: vocab.clone(),
        tensors: outcome.train_report.best_params.clone(),
    };
    checkpoint.save(&ckpt_path)?;

    Ok(vec![
        ckpt_path.display().to_string(),
        history_path.display().to_string(),
        report_path.display().to_string(),
    ])
}

/// Per-class sample counts by split, as a fixed-width table.
fn split_table(rows: &[ManifestRow]) -> String {
    let mut counts = [[0usize; 3]; IntentLabel::COUNT];
    for row in rows {
        counts[row.label.index()][row.split.index()] += 1;
    }
    let w = IntentLabel::names()
        .iter()
        .map(|n| n.len())
        .max()
        .unwrap_or(0)
        .max("total".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<w$}  {:>6} {:>6} {:>6} {:>6}",
        "class", "train", "val", "test", "total"
    );
    let mut totals = [0usize; 3];
    for label in IntentLabel::ALL {
        let row = counts[label.index()];
        for (total, count) in totals.iter_mut().zip(row) {
            *total += count;
        }
        let _ = writeln!(
            out,
            "{:<w$}  {:>6} {:>6} {:>6} {:>6}",
            label.name(),
            row[0],
            row[1],
            row[2],
            row.iter().sum::<usize>()
        );
    }
    let _ = writeln!(
        out,
        "{:<w$}  {:>6} {:>6} {:>6} {:>6}",
        "total",
        totals[0],
        totals[1],
        totals[2],
        totals.iter().sum::<usize>()
    );
    out
}

fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_reads_every_section_and_syncs_derived_fields() {
        let text = "\
# training run
dataset = corpus
seed = 9
strategy = late_fusion
vocab_size = 64
model.text.d_model = 16
model.vision.image_size = 16
model.vision.patch_size = 4
train.epochs = 7
train.warmup_steps = 12
train.preprocess.blur = true
compare.decorrelate_seeds = true
";
        let cfg = RunConfig::parse("test", text).unwrap();
        assert_eq!(cfg.dataset.as_deref(), Some(Path::new("corpus")));
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.strategy, ModelKind::LateFusion);
        assert_eq!(cfg.model.kind, ModelKind::LateFusion);
        assert_eq!(cfg.vocab_budget, 64);
        assert_eq!(cfg.model.text.d_model, 16);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.warmup_steps, Some(12));
        assert!(cfg.train.preprocess.blur);
        assert!(cfg.decorrelate_seeds);
        // Preprocessing resizes to the encoder's input unless overridden.
        assert_eq!(cfg.train.preprocess.target_size, 16);
    }

    #[test]
    fn parse_collects_every_problem_with_source_and_line() {
        let text = "seed = x\nnot a pair\nmystery = 1\nmodel.text.vocab_size = 99\n";
        let err = RunConfig::parse("cfg", text).unwrap_err();
        let Error::Config { problems } = err else {
            panic!("expected a config error");
        };
        assert_eq!(problems.len(), 4);
        assert!(problems[0].contains("cfg line 1"), "{:?}", problems[0]);
        assert!(problems[1].contains("line 2"), "{:?}", problems[1]);
        assert!(
            problems[2].contains("unknown key \"mystery\""),
            "{:?}",
            problems[2]
        );
        assert!(problems[3].contains("vocab_size"), "{:?}", problems[3]);
    }

    #[test]
    fn explicit_target_size_survives_the_image_size_sync() {
        let text = "model.vision.image_size = 16\nmodel.vision.patch_size = 4\n\
                    train.preprocess.target_size = 8\n";
        let cfg = RunConfig::parse("t", text).unwrap();
        assert_eq!(cfg.train.preprocess.target_size, 8);
        assert_eq!(cfg.model.vision.image_size, 16);
    }

    #[test]
    fn to_kv_round_trips_through_parse() {
        let mut cfg = RunConfig::default();
        cfg.dataset = Some(PathBuf::from("data/synth"));
        cfg.seed = 5;
        cfg.strategy = ModelKind::EarlyFusion;
        cfg.train.warmup_steps = Some(12);
        cfg.train.peak_lr = 3e-3;
        cfg.model.text.n_heads = 2;
        let back = RunConfig::parse("kv", &cfg.to_kv()).unwrap();
        assert_eq!(back.dataset, cfg.dataset);
        assert_eq!(back.seed, 5);
        assert_eq!(back.train.seed, 5);
        assert_eq!(back.strategy, ModelKind::EarlyFusion);
        assert_eq!(back.model.kind, ModelKind::EarlyFusion);
        assert_eq!(back.train.warmup_steps, Some(12));
        assert_eq!(back.train.peak_lr, 3e-3);
        assert_eq!(back.model.text.n_heads, 2);
    }

    #[test]
    fn validate_reports_missing_dataset_only_when_required() {
        let cfg = RunConfig::default();
        let err = cfg.validate(true).unwrap_err();
        let Error::Config { problems } = err else {
            panic!("expected a config error");
        };
        assert!(problems.iter().any(|p| p.contains("dataset")));
        assert!(cfg.validate(false).is_ok());
    }
}
