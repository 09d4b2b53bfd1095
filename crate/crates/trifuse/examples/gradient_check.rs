//! Verifies every analytic gradient against central finite differences.
//!
//! The tape records each forward operation; `check_gradients` replays the
//! forward pass twice per parameter entry (value plus/minus a small step)
//! and compares the numeric slope to what backpropagation computed. The
//! per-parameter report groups entries by tensor name, so a broken
//! backward rule is pinned to the exact weight it corrupts.
//!
//! Run with: cargo run --example gradient_check

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trifuse::error::Result;
use trifuse::fusion::{IntentLabel, IntentModel, ModelConfig, ModelInput, ModelKind};
use trifuse::tensor::{check_gradients, GradCheckOptions, Params, Tensor};
use trifuse::text::CLS_ID;

fn main() -> Result<()> {
    // A pocket-sized intermediate-fusion model: small enough that probing
    // every single parameter entry takes well under a second.
    let mut cfg = ModelConfig::new(ModelKind::IntermediateFusion);
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

    let mut params = Params::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = IntentModel::init(cfg, &mut params, &mut rng)?;
    println!(
        "checking {} parameters of an intermediate-fusion model\n",
        params.numel()
    );

    let tokens = [CLS_ID, 5, 9, 4];
    let pixels = Tensor::new(
        vec![3, 8, 8],
        (0..192)
            .map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0)
            .collect(),
    )?;
    let input = ModelInput::both(&tokens, &pixels);

    let opts = GradCheckOptions::default();
    println!(
        "finite-difference step {:.0e}, tolerance {:.0e}",
        opts.step, opts.tolerance
    );
    let report = check_gradients(
        &mut params,
        |g, p| model.loss(g, p, &input, IntentLabel::Expressive, false),
        &opts,
    )?;
    println!("{}", report.render());
    assert!(report.pass(), "analytic and numeric gradients disagree");
    println!("all gradients match finite differences");
    Ok(())
}
