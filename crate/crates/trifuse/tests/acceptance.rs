//! End-to-end acceptance checks, one test per release criterion. Each
//! test prints a single `criterion N PASS` line (visible with
//! `--nocapture`); a failing criterion fails its test with the detail in
//! the assertion message.
//!
//! Criteria 4 and 8 share one five-model comparison run, built lazily in
//! a process-wide fixture so the expensive training happens once.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};
use tempfile::TempDir;
use trifuse::checkpoint::Checkpoint;
use trifuse::cli::{cmd_compare, cmd_train, Modality, RunConfig};
use trifuse::data::{
    gen_synthetic, load_manifest, prepare_examples, stratified_split, SplitRatios, SynthSpec,
};
use trifuse::error::Result;
use trifuse::fusion::{IntentLabel, IntentModel, LateCombiner, ModelConfig, ModelInput, ModelKind};
use trifuse::metrics::ConfusionMatrix;
use trifuse::tensor::{check_gradients, Activation, GradCheckOptions, Graph, Params, Tensor};
use trifuse::text::CLS_ID;
use trifuse::trace::Trace;
use trifuse::train::{evaluate, train, TrainConfig};

// ---------------------------------------------------------------------
// Criterion 1: gradient suite on all three fusion strategies.
// ---------------------------------------------------------------------

/// A fusion model small enough to finite-difference exhaustively.
fn pocket_model(kind: ModelKind) -> ModelConfig {
    let mut cfg = ModelConfig::new(kind);
    cfg.text.vocab_size = 12;
    cfg.text.d_model = 8;
    cfg.text.n_layers = 1;
    cfg.text.n_heads = 2;
    cfg.text.max_len = 8;
    cfg.vision.image_size = 8;
    cfg.vision.patch_size = 4;
    cfg.vision.d_model = 8;
    cfg.vision.n_layers = 1;
    cfg.vision.n_heads = 2;
    cfg.fusion.d_fuse = 8;
    cfg
}

fn random_pixels(side: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(
        vec![3, side, side],
        (0..3 * side * side)
            .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
            .collect(),
    )
    .expect("pixel tensor")
}

#[test]
fn criterion_1_gradient_suite() {
    let started = Instant::now();
    let tokens = [CLS_ID, 4, 7, 5, 3];
    let pixels = random_pixels(8, 17);
    let input = ModelInput::both(&tokens, &pixels);
    let mut worst = 0.0_f64;
    let mut sizes = Vec::new();
    for kind in [
        ModelKind::EarlyFusion,
        ModelKind::LateFusion,
        ModelKind::IntermediateFusion,
    ] {
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let model = IntentModel::init(pocket_model(kind), &mut params, &mut rng).unwrap();
        assert!(
            params.numel() < 5000,
            "{} has {} parameters, need < 5000",
            kind.name(),
            params.numel()
        );
        let report = check_gradients(
            &mut params,
            |g, p| model.loss(g, p, &input, IntentLabel::Advocative, false),
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.pass(), "{}:\n{}", kind.name(), report.render());
        worst = worst.max(report.max_rel_err());
        sizes.push(format!("{} {}p", kind.name(), params.numel()));
    }
    assert!(worst < 1e-4, "worst relative error {worst:e}");
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!(
        "criterion 1 PASS: {} | worst rel err {worst:.1e} | {:.1}s",
        sizes.join(", "),
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------
// Criterion 2: metrics vs a brute-force oracle.
// ---------------------------------------------------------------------

#[test]
fn criterion_2_metric_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let n_classes = rng.gen_range(2..=8usize);
        let n = rng.gen_range(1..=60usize);
        let pairs: Vec<(usize, usize)> = (0..n)
            .map(|_| (rng.gen_range(0..n_classes), rng.gen_range(0..n_classes)))
            .collect();
        let cm = ConfusionMatrix::from_pairs(n_classes, &pairs).unwrap();
        let names: Vec<String> = (0..n_classes).map(|c| format!("c{c}")).collect();
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let report = cm
            .report("oracle", ModelKind::TextOnly, &name_refs)
            .unwrap();

        let correct = pairs.iter().filter(|&&(t, p)| t == p).count();
        assert_eq!(
            report.accuracy.to_bits(),
            (correct as f64 / n as f64).to_bits(),
            "case {case}: accuracy"
        );
        let (mut sp, mut sr, mut sf) = (0.0_f64, 0.0_f64, 0.0_f64);
        for c in 0..n_classes {
            let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count();
            let fp = pairs.iter().filter(|&&(t, p)| t != c && p == c).count();
            let fnn = pairs.iter().filter(|&&(t, p)| t == c && p != c).count();
            let precision = if tp + fp == 0 {
                0.0
            } else {
                tp as f64 / (tp + fp) as f64
            };
            let recall = if tp + fnn == 0 {
                0.0
            } else {
                tp as f64 / (tp + fnn) as f64
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            let got = &report.per_class[c];
            assert_eq!(got.support, tp + fnn, "case {case} class {c}: support");
            assert_eq!(
                got.precision.to_bits(),
                precision.to_bits(),
                "case {case} class {c}: precision {} vs {precision}",
                got.precision
            );
            assert_eq!(
                got.recall.to_bits(),
                recall.to_bits(),
                "case {case} class {c}: recall {} vs {recall}",
                got.recall
            );
            assert_eq!(
                got.f1.to_bits(),
                f1.to_bits(),
                "case {case} class {c}: f1 {} vs {f1}",
                got.f1
            );
            sp += precision;
            sr += recall;
            sf += f1;
        }
        let k = n_classes as f64;
        assert_eq!(report.macro_precision.to_bits(), (sp / k).to_bits());
        assert_eq!(report.macro_recall.to_bits(), (sr / k).to_bits());
        assert_eq!(report.macro_f1.to_bits(), (sf / k).to_bits());
    }

    // Worked 2-class case: counts [[1, 1], [0, 2]] by (true, predicted).
    let cm = ConfusionMatrix::from_pairs(2, &[(0, 0), (0, 1), (1, 1), (1, 1)]).unwrap();
    let report = cm
        .report("worked", ModelKind::TextOnly, &["a", "b"])
        .unwrap();
    assert!(
        (report.per_class[0].precision - 1.0).abs() < 1e-15
            && (report.per_class[1].precision - 2.0 / 3.0).abs() < 1e-15
            && (report.per_class[0].recall - 0.5).abs() < 1e-15
            && (report.per_class[1].recall - 1.0).abs() < 1e-15,
        "per-class values of the worked case"
    );
    assert!(
        (report.macro_f1 - 11.0 / 15.0).abs() < 1e-12,
        "macro-F1 {} != 11/15",
        report.macro_f1
    );
    println!(
        "criterion 2 PASS: 200 randomized sets match brute force bit-exactly; worked case macro-F1 = 11/15"
    );
}

// ---------------------------------------------------------------------
// Criterion 3: stratified split totals on a 3048-sample corpus.
// ---------------------------------------------------------------------

#[test]
fn criterion_3_split_fidelity() {
    let sizes = [648usize, 484, 400, 466, 650, 400];
    let samples: Vec<(String, usize)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(class, &n)| (0..n).map(move |k| (format!("s{class}_{k:04}"), class)))
        .collect();
    assert_eq!(samples.len(), 3048);
    let ratios = SplitRatios {
        train: 2423.0 / 3048.0,
        val: 313.0 / 3048.0,
        test: 312.0 / 3048.0,
    };
    let splits = stratified_split(&samples, 6, &ratios, 0).unwrap();
    let mut totals = [0usize; 3];
    for s in &splits {
        totals[s.index()] += 1;
    }
    assert_eq!(totals, [2423, 313, 312]);
    println!("criterion 3 PASS: 3048 samples split exactly into 2423/313/312");
}

// ---------------------------------------------------------------------
// Criteria 4 + 8: the shared five-model comparison on the default
// synthetic corpus (600 train / 78 val / 78 test, fixed seed).
// ---------------------------------------------------------------------

struct RunRecord {
    kind: ModelKind,
    macro_f1: f64,
    /// `(epoch, val macro-F1)` rows parsed from the history file.
    history: Vec<(usize, f64)>,
}

struct ComparisonFixture {
    _root: TempDir,
    elapsed: Duration,
    patience: usize,
    runs: Vec<RunRecord>,
}

impl ComparisonFixture {
    fn f1(&self, kind: ModelKind) -> f64 {
        self.runs
            .iter()
            .find(|r| r.kind == kind)
            .expect("every ablation row ran")
            .macro_f1
    }
}

fn compare_config(data_dir: &Path, out_dir: &Path) -> String {
    format!(
        "dataset = {}\n\
         output_dir = {}\n\
         seed = 1\n\
         vocab_size = 96\n\
         model.text.d_model = 32\n\
         model.text.n_layers = 1\n\
         model.text.n_heads = 2\n\
         model.text.max_len = 16\n\
         model.vision.image_size = 16\n\
         model.vision.patch_size = 4\n\
         model.vision.d_model = 32\n\
         model.vision.n_layers = 1\n\
         model.vision.n_heads = 2\n\
         model.fusion.d_fuse = 64\n\
         model.fusion.dropout = 0.05\n\
         train.epochs = 60\n\
         train.batch_size = 16\n\
         train.peak_lr = 0.002\n\
         train.patience = 15\n\
         train.augment_images = false\n\
         train.preprocess.target_size = 16\n",
        data_dir.display(),
        out_dir.display()
    )
}

fn parse_history(path: &Path) -> Vec<(usize, f64)> {
    let text = std::fs::read_to_string(path).expect("history file");
    let mut lines = text.lines();
    let header = lines.next().expect("header row");
    let val_f1_col = header
        .split('\t')
        .position(|h| h == "val_f1")
        .expect("val_f1 column");
    lines
        .map(|line| {
            let cells: Vec<&str> = line.split('\t').collect();
            (
                cells[0].parse().expect("epoch"),
                cells[val_f1_col].parse().expect("val f1"),
            )
        })
        .collect()
}

static COMPARISON: OnceLock<ComparisonFixture> = OnceLock::new();

fn comparison() -> &'static ComparisonFixture {
    COMPARISON.get_or_init(|| {
        let root = tempfile::tempdir().expect("temp dir");
        let data_dir = root.path().join("data");
        gen_synthetic(&SynthSpec::default(), &data_dir).expect("generate corpus");
        let out_dir = root.path().join("runs");
        let config_path = root.path().join("compare.kv");
        std::fs::write(&config_path, compare_config(&data_dir, &out_dir)).expect("write config");

        let started = Instant::now();
        cmd_compare(&config_path, None).expect("comparison run");
        let elapsed = started.elapsed();

        // Recover each run's test macro-F1 from its checkpoint artifact.
        let rows = load_manifest(&data_dir.join("manifest.tsv")).expect("manifest");
        let runs = ModelKind::ABLATION_ORDER
            .into_iter()
            .map(|kind| {
                let stem = kind.name();
                let ck =
                    Checkpoint::load(&out_dir.join(format!("{stem}.ckpt"))).expect("checkpoint");
                let (model, params) = ck.build_model().expect("rebuild model");
                let mut trace = Trace::new(false);
                let sets = prepare_examples(
                    &data_dir,
                    &rows,
                    &ck.vocab,
                    ck.model.text.max_len,
                    &mut trace,
                )
                .expect("prepare examples");
                let eval_cfg = TrainConfig {
                    preprocess: ck.preprocess.clone(),
                    ..TrainConfig::default()
                };
                let (_, cm) = evaluate(&model, &params, &sets.test, &eval_cfg).expect("evaluate");
                let names = IntentLabel::names();
                let report = cm.report(stem, kind, &names).expect("report");
                let history = parse_history(&out_dir.join(format!("{stem}.history.tsv")));
                RunRecord {
                    kind,
                    macro_f1: report.macro_f1,
                    history,
                }
            })
            .collect();
        ComparisonFixture {
            _root: root,
            elapsed,
            patience: 15,
            runs,
        }
    })
}

#[test]
fn criterion_4_fusion_ordering_at_desk_scale() {
    let fx = comparison();
    let text = fx.f1(ModelKind::TextOnly);
    let image = fx.f1(ModelKind::ImageOnly);
    let early = fx.f1(ModelKind::EarlyFusion);
    let late = fx.f1(ModelKind::LateFusion);
    let inter = fx.f1(ModelKind::IntermediateFusion);
    let best_unimodal = text.max(image);
    assert!(
        inter > late,
        "intermediate {inter:.4} must beat late {late:.4}"
    );
    assert!(
        late >= early,
        "late {late:.4} must not trail early {early:.4}"
    );
    assert!(
        early > best_unimodal,
        "early {early:.4} must beat best unimodal {best_unimodal:.4}"
    );
    assert!(inter >= 0.90, "intermediate macro-F1 {inter:.4} below 0.90");
    assert!(
        inter - best_unimodal >= 0.10,
        "fusion gap {:.4} below 0.10",
        inter - best_unimodal
    );
    assert!(
        fx.elapsed < Duration::from_secs(600),
        "comparison took {:?}",
        fx.elapsed
    );
    println!(
        "criterion 4 PASS: macro-F1 text {text:.4} | image {image:.4} | early {early:.4} | \
         late {late:.4} | intermediate {inter:.4} | gap {:.4} | {:.0}s",
        inter - best_unimodal,
        fx.elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_8_early_stopping_contract() {
    let fx = comparison();
    for run in &fx.runs {
        assert!(
            !run.history.is_empty(),
            "{}: empty history",
            run.kind.name()
        );
        let mut best_epoch = run.history[0].0;
        let mut best_f1 = run.history[0].1;
        for &(epoch, f1) in &run.history[1..] {
            if f1 > best_f1 {
                best_f1 = f1;
                best_epoch = epoch;
            }
        }
        let stopped = run.history.last().unwrap().0;
        assert!(
            stopped <= best_epoch + fx.patience + 1,
            "{}: ran to epoch {stopped} with best {best_epoch} and patience {}",
            run.kind.name(),
            fx.patience
        );
    }
    println!(
        "criterion 8 PASS: all 5 runs stopped within best+patience+1 (patience {})",
        fx.patience
    );
}

// ---------------------------------------------------------------------
// Criterion 5: degeneracy identities.
// ---------------------------------------------------------------------

fn sample_tokens() -> [usize; 4] {
    [CLS_ID, 4, 6, 3]
}

/// Late fusion with its image branch silenced must produce the text-only
/// model's logits bit for bit (identity blend, identity activation).
fn late_fusion_degenerates_to_text_only(combiner: LateCombiner) -> Result<()> {
    let mut late_cfg = pocket_model(ModelKind::LateFusion);
    late_cfg.fusion.activation = Activation::Identity;
    late_cfg.fusion.late_combiner = combiner;
    let mut late_params = Params::new();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let late = IntentModel::init(late_cfg, &mut late_params, &mut rng)?;
    let silenced = late_params.find("head.blend.image").expect("image blend");
    for v in late_params.get_mut(silenced).data_mut() {
        *v = 0.0;
    }

    let mut text_params = Params::new();
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let text = IntentModel::init(
        pocket_model(ModelKind::TextOnly),
        &mut text_params,
        &mut rng,
    )?;
    // Transplant the late model's text tower and text head.
    for id in text_params.ids().collect::<Vec<_>>() {
        let name = text_params.name(id).to_string();
        let source = match name.as_str() {
            "head.w" => "head.text.w".to_string(),
            "head.b" => "head.text.b".to_string(),
            other => other.to_string(),
        };
        let src = late_params.find(&source).expect("shared parameter");
        *text_params.get_mut(id) = late_params.get(src).clone();
    }

    let tokens = sample_tokens();
    let pixels = random_pixels(8, 53);
    let mut ga = Graph::new(0);
    let a = late.logits(
        &mut ga,
        &late_params,
        &ModelInput::both(&tokens, &pixels),
        false,
    )?;
    let mut gb = Graph::new(0);
    let b = text.logits(&mut gb, &text_params, &ModelInput::text(&tokens), false)?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
    assert_eq!(
        bits(ga.value(a)),
        bits(gb.value(b)),
        "late/{combiner:?} vs text-only logits"
    );
    Ok(())
}

/// On identical feature vectors, the intermediate head with the column
/// block weight `[W_t | W_i]` must match the early head within 1e-12.
fn intermediate_block_weights_match_early_head(draw_seed: u64) -> Result<()> {
    let (dt, dv, df, c) = (5, 7, 6, IntentLabel::COUNT);
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let w_text = draw(df * dt);
    let w_image = draw(df * dv);
    let bias = draw(df);
    let out_w = draw(c * df);
    let out_b = draw(c);
    let t_feat = draw(dt);
    let i_feat = draw(dv);
    let mut block = Vec::with_capacity(df * (dt + dv));
    for r in 0..df {
        block.extend_from_slice(&w_text[r * dt..(r + 1) * dt]);
        block.extend_from_slice(&w_image[r * dv..(r + 1) * dv]);
    }

    let mut g = Graph::new(0);
    let t = g.constant(vec![dt], t_feat)?;
    let i = g.constant(vec![dv], i_feat)?;
    let out_w = g.constant(vec![c, df], out_w)?;
    let out_b = g.constant(vec![c], out_b)?;

    // Early head: f(W_t t + W_i i + b), then the classifier.
    let wt = g.constant(vec![df, dt], w_text)?;
    let wi = g.constant(vec![df, dv], w_image)?;
    let b1 = g.constant(vec![df], bias.clone())?;
    let st = g.matvec(wt, t)?;
    let si = g.matvec(wi, i)?;
    let sum = g.add(st, si)?;
    let pre = g.add(sum, b1)?;
    let z = g.gelu(pre);
    let zy = g.matvec(out_w, z)?;
    let early_logits = g.add(zy, out_b)?;

    // Intermediate head: f(W [t; i] + b) with the block weight.
    let w = g.constant(vec![df, dt + dv], block)?;
    let b2 = g.constant(vec![df], bias)?;
    let cat = g.concat_cols(t, i)?;
    let pre = g.matvec(w, cat)?;
    let pre = g.add(pre, b2)?;
    let z = g.gelu(pre);
    let zy = g.matvec(out_w, z)?;
    let inter_logits = g.add(zy, out_b)?;

    for (a, b) in g.value(early_logits).iter().zip(g.value(inter_logits)) {
        assert!(
            (a - b).abs() < 1e-12,
            "early {a} vs intermediate {b} (seed {draw_seed})"
        );
    }
    Ok(())
}

#[test]
fn criterion_5_degeneracy_identities() {
    late_fusion_degenerates_to_text_only(LateCombiner::Scalar).unwrap();
    late_fusion_degenerates_to_text_only(LateCombiner::Matrix).unwrap();
    for seed in [61, 62, 63] {
        intermediate_block_weights_match_early_head(seed).unwrap();
    }
    println!(
        "criterion 5 PASS: silenced late fusion is bit-equal to text-only; \
         block-weight intermediate matches early within 1e-12"
    );
}

// ---------------------------------------------------------------------
// Criterion 6: bit-identical artifacts from identical runs.
// ---------------------------------------------------------------------

fn determinism_config(data_dir: &Path, out_dir: &Path) -> String {
    format!(
        "dataset = {}\n\
         output_dir = {}\n\
         seed = 3\n\
         vocab_size = 64\n\
         model.text.d_model = 8\n\
         model.text.n_layers = 1\n\
         model.text.n_heads = 2\n\
         model.text.max_len = 8\n\
         model.vision.image_size = 8\n\
         model.vision.patch_size = 4\n\
         model.vision.d_model = 8\n\
         model.vision.n_layers = 1\n\
         model.vision.n_heads = 2\n\
         model.fusion.d_fuse = 8\n\
         train.epochs = 6\n\
         train.batch_size = 8\n\
         train.peak_lr = 0.002\n\
         train.patience = 6\n\
         train.augment_images = true\n\
         train.preprocess.target_size = 8\n",
        data_dir.display(),
        out_dir.display()
    )
}

#[test]
fn criterion_6_determinism() {
    let root = tempfile::tempdir().unwrap();
    let data_dir = root.path().join("data");
    let mut spec = SynthSpec::default();
    spec.n_per_class = 12;
    spec.image_size = 8;
    spec.text_len = 6;
    spec.seed = 5;
    gen_synthetic(&spec, &data_dir).unwrap();

    let mut artifact_sets: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for tag in ["a", "b"] {
        let out_dir = root.path().join(format!("runs-{tag}"));
        let config_path = root.path().join(format!("train-{tag}.kv"));
        std::fs::write(&config_path, determinism_config(&data_dir, &out_dir)).unwrap();
        cmd_train(&config_path, Modality::Both, None).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|entry| {
                let entry = entry.unwrap();
                let name = entry.file_name().to_string_lossy().into_owned();
                (name, std::fs::read(entry.path()).unwrap())
            })
            .collect();
        files.sort_by(|a, b| a.0.cmp(&b.0));
        artifact_sets.push(files);
    }
    let [first, second]: [Vec<(String, Vec<u8>)>; 2] = artifact_sets.try_into().unwrap();
    assert_eq!(first.len(), 3, "checkpoint, history, and report expected");
    assert_eq!(
        first.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(),
        second.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>()
    );
    for ((name, bytes_a), (_, bytes_b)) in first.iter().zip(&second) {
        assert_eq!(bytes_a, bytes_b, "{name} differs between identical runs");
    }
    println!(
        "criterion 6 PASS: {} artifacts bit-identical across an identical run pair",
        first.len()
    );
}

// ---------------------------------------------------------------------
// Criterion 7: memorization of a 60-sample subset.
// ---------------------------------------------------------------------

#[test]
fn criterion_7_overfit_small_subset() {
    let root = tempfile::tempdir().unwrap();
    let data_dir = root.path().join("data");
    // 13 per class puts exactly 10 per class (60 total) in the train split.
    let mut spec = SynthSpec::default();
    spec.n_per_class = 13;
    spec.image_size = 16;
    spec.seed = 2;
    gen_synthetic(&spec, &data_dir).unwrap();

    let mut cfg = RunConfig::default();
    cfg.dataset = Some(PathBuf::from(&data_dir));
    cfg.model.kind = ModelKind::IntermediateFusion;
    cfg.model.text.d_model = 32;
    cfg.model.text.n_layers = 1;
    cfg.model.text.n_heads = 2;
    cfg.model.text.max_len = 16;
    cfg.model.text.dropout = 0.0;
    cfg.model.vision.image_size = 16;
    cfg.model.vision.patch_size = 4;
    cfg.model.vision.d_model = 32;
    cfg.model.vision.n_layers = 1;
    cfg.model.vision.n_heads = 2;
    cfg.model.vision.dropout = 0.0;
    cfg.model.fusion.d_fuse = 64;
    cfg.model.fusion.dropout = 0.0;
    cfg.train.epochs = 50;
    cfg.train.patience = 50;
    cfg.train.peak_lr = 0.002;
    cfg.train.batch_size = 16;
    cfg.train.augment_images = false;
    cfg.train.preprocess.target_size = 16;

    let data = trifuse::cli::load_dataset(&mut cfg).unwrap();
    assert_eq!(data.sets.train.len(), 60, "subset size");

    let mut params = Params::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = IntentModel::init(cfg.model.clone(), &mut params, &mut rng).unwrap();
    let report = train(
        &model,
        &mut params,
        &data.sets.train,
        &data.sets.val,
        &cfg.train,
    )
    .unwrap();

    // Final weights must memorize the subset.
    let (_, cm) = evaluate(&model, &params, &data.sets.train, &cfg.train).unwrap();
    let names = IntentLabel::names();
    let final_acc = cm
        .report("overfit", cfg.model.kind, &names)
        .unwrap()
        .accuracy;
    let best_epoch_acc = report
        .history
        .iter()
        .map(|r| r.train_accuracy)
        .fold(0.0, f64::max);
    assert!(
        final_acc >= 0.98,
        "final train accuracy {final_acc:.4} (best epoch-level {best_epoch_acc:.4}) below 0.98 \
         within {} epochs",
        report.history.len()
    );
    println!(
        "criterion 7 PASS: train accuracy {final_acc:.4} on the 60-sample subset after {} epochs",
        report.history.len()
    );
}
