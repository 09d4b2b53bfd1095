//! Trains an intermediate-fusion classifier end to end on the default
//! synthetic corpus: generate data, build the vocabulary from the train
//! split, encode every sample, run AdamW with linear warmup and early
//! stopping, then score the held-out test split. Takes 10-20 seconds.
//!
//! Run with: cargo run --release --example train_intermediate

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use trifuse::data::{build_vocab, gen_synthetic, prepare_examples, SynthSpec};
use trifuse::error::Result;
use trifuse::fusion::{IntentLabel, IntentModel, ModelConfig, ModelKind};
use trifuse::tensor::Params;
use trifuse::trace::Trace;
use trifuse::train::{evaluate, train, TrainConfig};

fn main() -> Result<()> {
    // 1. Data: the default corpus plants a text signal in 90% of texts
    //    and an image signal in 90% of images, independently.
    let spec = SynthSpec::default();
    let data_dir = PathBuf::from("target/example-train-data");
    let rows = gen_synthetic(&spec, &data_dir)?;

    let vocab = build_vocab(&rows, 96)?;
    let mut trace = Trace::new(false);
    let sets = prepare_examples(&data_dir, &rows, &vocab, 16, &mut trace)?;
    println!(
        "corpus ready: {} train / {} val / {} test, vocabulary of {} ids",
        sets.train.len(),
        sets.val.len(),
        sets.test.len(),
        vocab.size()
    );

    // 2. Model: both encoders feed one fused hidden layer.
    let mut cfg = ModelConfig::new(ModelKind::IntermediateFusion);
    cfg.text.vocab_size = vocab.size();
    cfg.text.d_model = 32;
    cfg.text.n_layers = 1;
    cfg.text.n_heads = 2;
    cfg.text.max_len = 16;
    cfg.vision.image_size = 16;
    cfg.vision.patch_size = 4;
    cfg.vision.d_model = 32;
    cfg.vision.n_layers = 1;
    cfg.vision.n_heads = 2;
    cfg.fusion.d_fuse = 64;
    cfg.fusion.dropout = 0.05;
    let mut params = Params::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = IntentModel::init(cfg.clone(), &mut params, &mut rng)?;
    println!("{} model: {} parameters", cfg.kind.name(), params.numel());

    // 3. Train with early stopping on validation macro-F1. Images are
    //    generated at 32x32 and downscaled to 16x16 on the way in; flip
    //    augmentation stays off because it would relocate the planted
    //    quadrant signal.
    let mut tc = TrainConfig::default();
    tc.epochs = 60;
    tc.batch_size = 16;
    tc.peak_lr = 2e-3;
    tc.patience = 15;
    tc.augment_images = false;
    tc.preprocess.target_size = 16;
    tc.seed = 1;
    let report = train(&model, &mut params, &sets.train, &sets.val, &tc)?;

    println!("\nepoch  train_loss  train_f1  val_loss  val_f1      lr");
    let last = report.history.len();
    for row in &report.history {
        // Every fourth epoch plus the best and the last keeps the arc
        // visible without a wall of numbers; the full table is what
        // `TrainReport::history_tsv` writes to disk.
        if row.epoch % 4 != 1 && row.epoch != report.best_epoch && row.epoch != last {
            continue;
        }
        println!(
            "{:>5}  {:>10.4}  {:>8.4}  {:>8.4}  {:>6.4}  {:.2e}{}",
            row.epoch,
            row.train_loss,
            row.train_macro_f1,
            row.val_loss,
            row.val_macro_f1,
            row.lr,
            if row.epoch == report.best_epoch {
                "  <- best"
            } else {
                ""
            }
        );
    }
    println!(
        "\nbest epoch {} of {} (val macro-F1 {:.4}){}",
        report.best_epoch,
        last,
        report.best_val_macro_f1,
        if report.stopped_early {
            ", stopped early"
        } else {
            ""
        }
    );

    // 4. Restore the best weights and evaluate on the untouched test split.
    params.load_values(&report.best_params)?;
    let (test_loss, cm) = evaluate(&model, &params, &sets.test, &tc)?;
    let names = IntentLabel::names();
    let eval = cm.report(cfg.kind.name(), cfg.kind, &names)?;
    println!("\ntest loss {test_loss:.4}");
    println!("{}", eval.render());
    Ok(())
}
