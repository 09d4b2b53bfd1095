//! Follows an image from pixels to patch-transformer features: build a
//! quadrant-tinted test card, roundtrip it through PPM bytes, resize it
//! bilinearly, apply a random augmentation, normalize to a tensor, and
//! encode it with the vision transformer.
//!
//! Run with: cargo run --example image_pipeline

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trifuse::error::Result;
use trifuse::tensor::{Graph, Params};
use trifuse::vision::{
    augment, hflip, preprocess, resize_bilinear, Image, PreprocessConfig, VisionEncoder,
    VisionEncoderConfig,
};

/// A 32x32 card whose top-left quadrant is tinted red — the same kind of
/// planted quadrant signal the synthetic corpus uses.
fn test_card() -> Result<Image> {
    let mut img = Image::filled(32, 32, 0.35)?;
    for y in 0..16 {
        for x in 0..16 {
            img.set_pixel(x, y, [0.9, 0.2, 0.2]);
        }
    }
    Ok(img)
}

fn mean_rgb(img: &Image, x0: usize, y0: usize, side: usize) -> [f64; 3] {
    let mut acc = [0.0; 3];
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            let px = img.pixel(x, y);
            for c in 0..3 {
                acc[c] += px[c];
            }
        }
    }
    acc.map(|v| v / (side * side) as f64)
}

fn main() -> Result<()> {
    let img = test_card()?;
    println!("test card: {}x{} pixels", img.width(), img.height());

    // PPM is the on-disk format for corpus images. Channels quantize to
    // 8 bits, so a roundtrip moves each value by at most half a step
    // (1/510).
    let restored = Image::from_ppm_bytes(&img.to_ppm_bytes())?;
    println!(
        "ppm roundtrip: {} bytes, max channel error {:.4}",
        img.to_ppm_bytes().len(),
        img.data()
            .iter()
            .zip(restored.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    );

    let small = resize_bilinear(&img, 16, 16)?;
    println!(
        "resized to 16x16: top-left mean RGB {:?} vs bottom-right {:?}",
        round2(&mean_rgb(&small, 0, 0, 8)),
        round2(&mean_rgb(&small, 8, 8, 8)),
    );
    println!("  (the quadrant tint survives the downscale)");

    // A horizontal flip moves the tint to the top-right — which is why
    // flip augmentation must stay off when quadrant position carries the
    // label.
    let flipped = hflip(&small);
    println!(
        "after hflip: top-left mean RGB {:?}, top-right {:?}",
        round2(&mean_rgb(&flipped, 0, 0, 8)),
        round2(&mean_rgb(&flipped, 8, 0, 8)),
    );

    // The stochastic augmenter composes flip, small rotation, and
    // brightness jitter from a seeded stream.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let jittered = augment(&small, &mut rng);
    println!(
        "augmented copy differs from original: {}",
        jittered.data() != small.data()
    );

    // Normalize to a [3, S, S] tensor and encode as 4x4 patches.
    let prep = PreprocessConfig {
        target_size: 16,
        ..PreprocessConfig::default()
    };
    let pixels = preprocess(&img, &prep)?;
    println!("\npreprocessed tensor shape {:?}", pixels.shape());

    let cfg = VisionEncoderConfig {
        image_size: 16,
        patch_size: 4,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        ..VisionEncoderConfig::default()
    };
    println!(
        "patch grid {0}x{0} -> {1} patches of {2} values each",
        cfg.grid_size(),
        cfg.n_patches(),
        cfg.patch_dim()
    );
    let mut params = Params::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let encoder = VisionEncoder::init(cfg, "vision", &mut params, &mut rng)?;
    let mut g = Graph::new(0);
    let feats = encoder.forward(&mut g, &params, &pixels, false)?;
    println!(
        "encoder output: shallow {:?}, deep {:?} ({} parameters)",
        g.shape(feats.shallow),
        g.shape(feats.deep),
        params.numel()
    );
    Ok(())
}

fn round2(v: &[f64; 3]) -> [f64; 3] {
    v.map(|x| (x * 100.0).round() / 100.0)
}
