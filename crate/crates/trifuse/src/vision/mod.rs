//! Vision pipeline: PPM images, preprocessing, and the patch encoder.
//!
//! [`preprocess`] turns a raw [`Image`] into the normalized CHW tensor
//! the encoder consumes: resize to the model size, optional denoise
//! (3x3 Gaussian) and sharpen (unsharp mask), then per-channel
//! standardization. Training-time jitter ([`augment`]) is applied by the
//! caller before preprocessing, and only on training samples.

mod encoder;
mod image;

pub use encoder::{Pooling, VisionEncoder, VisionEncoderConfig, VisionFeatures};
pub use image::{
    adjust_brightness, augment, clamp01, gaussian_blur3, hflip, resize_bilinear, rotate,
    unsharp_mask, Image, BRIGHTNESS_HI, BRIGHTNESS_LO, CHANNELS, FLIP_PROBABILITY,
    MAX_ROTATE_DEGREES,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fixed preprocessing applied to every image, train and eval alike.
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    /// Square side length the encoder expects.
    pub target_size: usize,
    /// Apply the 3x3 Gaussian denoise step.
    pub blur: bool,
    /// Apply unsharp masking after the denoise step.
    pub sharpen: bool,
    /// Per-channel standardization statistics.
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_size: 32,
            blur: false,
            sharpen: false,
            mean: [0.5; CHANNELS],
            std: [0.5; CHANNELS],
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.target_size == 0 {
            problems.push("target_size must be positive".to_string());
        }
        for (c, &s) in self.std.iter().enumerate() {
            if s <= 0.0 {
                problems.push(format!("std[{c}] = {s} must be positive"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }
}

/// Standardizes an HWC image into a `[3, H, W]` tensor:
/// `out[c] = (pixel[c] - mean[c]) / std[c]`.
pub fn normalize(img: &Image, mean: [f64; CHANNELS], std: [f64; CHANNELS]) -> Result<Tensor> {
    for (c, &s) in std.iter().enumerate() {
        if s <= 0.0 {
            return Err(Error::parameter(
                "normalize",
                format!("std[{c}] = {s} must be positive"),
            ));
        }
    }
    let (w, h) = (img.width(), img.height());
    let mut data = vec![0.0; CHANNELS * h * w];
    let src = img.data();
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                data[c * h * w + y * w + x] = (src[(y * w + x) * CHANNELS + c] - mean[c]) / std[c];
            }
        }
    }
    Tensor::new(vec![CHANNELS, h, w], data)
}

/// Inverse of [`normalize`]: recovers the HWC image from a CHW tensor.
pub fn denormalize(pixels: &Tensor, mean: [f64; CHANNELS], std: [f64; CHANNELS]) -> Result<Image> {
    let shape = pixels.shape();
    if shape.len() != 3 || shape[0] != CHANNELS {
        return Err(Error::shape(
            "denormalize",
            format!("expected a [{CHANNELS}, H, W] tensor, got {shape:?}"),
        ));
    }
    let (h, w) = (shape[1], shape[2]);
    let src = pixels.data();
    let mut data = vec![0.0; CHANNELS * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                data[(y * w + x) * CHANNELS + c] = src[c * h * w + y * w + x] * std[c] + mean[c];
            }
        }
    }
    Image::new(w, h, data)
}

/// Full deterministic preprocessing: resize, optional filters, normalize.
pub fn preprocess(img: &Image, cfg: &PreprocessConfig) -> Result<Tensor> {
    cfg.validate()?;
    let mut out = resize_bilinear(img, cfg.target_size, cfg.target_size)?;
    if cfg.blur {
        out = gaussian_blur3(&out);
    }
    if cfg.sharpen {
        out = unsharp_mask(&out);
    }
    normalize(&out, cfg.mean, cfg.std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * CHANNELS).map(|_| rng.gen::<f64>()).collect();
        Image::new(w, h, data).unwrap()
    }

    #[test]
    fn default_stats_round_trip_exactly() {
        // mean 0.5 / std 0.5 uses power-of-two arithmetic, so the
        // round trip is bit-exact.
        let img = random_image(5, 4, 1);
        let t = normalize(&img, [0.5; 3], [0.5; 3]).unwrap();
        let back = denormalize(&t, [0.5; 3], [0.5; 3]).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn normalize_lays_out_channels_first() {
        let mut img = Image::filled(2, 1, 0.0).unwrap();
        img.set_pixel(0, 0, [1.0, 0.5, 0.0]);
        img.set_pixel(1, 0, [0.0, 0.5, 1.0]);
        let t = normalize(&img, [0.0; 3], [1.0; 3]).unwrap();
        assert_eq!(t.shape(), [3, 1, 2]);
        assert_eq!(t.data(), [1.0, 0.0, 0.5, 0.5, 0.0, 1.0]);
    }

    #[test]
    fn arbitrary_stats_round_trip_closely() {
        let img = random_image(3, 3, 2);
        let mean = [0.48, 0.45, 0.41];
        let std = [0.23, 0.25, 0.27];
        let back = denormalize(&normalize(&img, mean, std).unwrap(), mean, std).unwrap();
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_std_is_rejected() {
        let img = random_image(2, 2, 3);
        assert!(normalize(&img, [0.5; 3], [0.5, 0.0, 0.5]).is_err());
    }

    #[test]
    fn preprocess_resizes_and_normalizes() {
        let img = random_image(9, 7, 4);
        let cfg = PreprocessConfig {
            target_size: 4,
            ..PreprocessConfig::default()
        };
        let t = preprocess(&img, &cfg).unwrap();
        assert_eq!(t.shape(), [3, 4, 4]);
        // Values of a [0,1] image under mean/std 0.5 live in [-1, 1].
        assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn filter_flags_change_the_output() {
        let mut img = Image::filled(8, 8, 0.2).unwrap();
        img.set_pixel(3, 3, [0.9; 3]);
        let plain = PreprocessConfig {
            target_size: 8,
            ..PreprocessConfig::default()
        };
        let blurred = PreprocessConfig {
            blur: true,
            ..plain.clone()
        };
        let sharpened = PreprocessConfig {
            sharpen: true,
            ..plain.clone()
        };
        let a = preprocess(&img, &plain).unwrap();
        let b = preprocess(&img, &blurred).unwrap();
        let c = preprocess(&img, &sharpened).unwrap();
        assert_ne!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
        assert_ne!(b.data(), c.data());
    }
}
