//! Saves a trained model to a single-file checkpoint and proves the
//! reloaded copy is the same model: identical logits on the same input,
//! bit for bit.
//!
//! A checkpoint bundles everything evaluation needs — model shape,
//! preprocessing settings, the vocabulary, and every weight tensor — so
//! `eval` works from the file alone.
//!
//! Run with: cargo run --example checkpoint_roundtrip

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use trifuse::checkpoint::Checkpoint;
use trifuse::data::{build_vocab, gen_synthetic, prepare_examples, SynthSpec};
use trifuse::error::Result;
use trifuse::fusion::{IntentModel, ModelConfig, ModelInput, ModelKind};
use trifuse::tensor::{Graph, Params};
use trifuse::trace::Trace;
use trifuse::train::{train, TrainConfig};
use trifuse::vision::preprocess;

fn main() -> Result<()> {
    // A tiny corpus and a short training run: enough to make weights
    // that are not just their initialization.
    let mut spec = SynthSpec::default();
    spec.n_per_class = 12;
    spec.image_size = 8;
    spec.text_len = 6;
    let data_dir = PathBuf::from("target/example-ckpt-data");
    let rows = gen_synthetic(&spec, &data_dir)?;
    let vocab = build_vocab(&rows, 64)?;
    let mut trace = Trace::new(false);
    let sets = prepare_examples(&data_dir, &rows, &vocab, 8, &mut trace)?;

    let mut cfg = ModelConfig::new(ModelKind::LateFusion);
    cfg.text.vocab_size = vocab.size();
    cfg.text.d_model = 8;
    cfg.text.n_layers = 1;
    cfg.text.n_heads = 2;
    cfg.text.max_len = 8;
    cfg.vision.image_size = 8;
    cfg.vision.patch_size = 4;
    cfg.vision.d_model = 8;
    cfg.vision.n_layers = 1;
    cfg.vision.n_heads = 2;
    let mut params = Params::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = IntentModel::init(cfg.clone(), &mut params, &mut rng)?;

    let mut tc = TrainConfig::default();
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.patience = 3;
    tc.preprocess.target_size = 8;
    let report = train(&model, &mut params, &sets.train, &sets.val, &tc)?;
    params.load_values(&report.best_params)?;

    // Save, then reload into a completely fresh model + parameter store.
    let path = PathBuf::from("target/example-model.ckpt");
    let ck = Checkpoint {
        model: cfg.clone(),
        preprocess: tc.preprocess.clone(),
        vocab: vocab.clone(),
        tensors: report.best_params.clone(),
    };
    ck.save(&path)?;
    let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!("saved {} ({size} bytes)", path.display());

    let loaded = Checkpoint::load(&path)?;
    let (model2, params2) = loaded.build_model()?;
    println!(
        "reloaded: {} with {} tensors, vocabulary of {} ids",
        loaded.model.kind.name(),
        loaded.tensors.len(),
        loaded.vocab.size()
    );

    // Same input through both copies - logits must agree exactly.
    let sample = &sets.test[0];
    let image = sample.image.as_ref().expect("corpus samples carry images");
    let pixels = preprocess(image, &tc.preprocess)?;
    let input = ModelInput::both(&sample.tokens, &pixels);
    let mut ga = Graph::new(0);
    let a = model.logits(&mut ga, &params, &input, false)?;
    let mut gb = Graph::new(0);
    let b = model2.logits(&mut gb, &params2, &input, false)?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(ga.value(a)), bits(gb.value(b)));
    println!(
        "logits on sample {:?} identical before and after the roundtrip: {:?}",
        sample.id,
        ga.value(a)
            .iter()
            .map(|x| (x * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );
    Ok(())
}
