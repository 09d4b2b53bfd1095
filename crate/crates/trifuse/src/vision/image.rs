//! RGB images and pixel-level operations.
//!
//! An [`Image`] stores interleaved RGB rows (HWC) as `f64` in `[0, 1]`.
//! Files use binary PPM (P6, maxval 255): a self-describing format that
//! is trivial to write byte-exactly and to inspect with standard tools.
//! Quantization is round-to-nearest, so save/load of a loaded image
//! reproduces the file byte for byte.

use crate::error::{Error, Result};
use rand::Rng;
use std::path::Path;

pub const CHANNELS: usize = 3;

/// Geometric/photometric jitter bounds used by [`augment`].
pub const MAX_ROTATE_DEGREES: f64 = 15.0;
pub const BRIGHTNESS_LO: f64 = 0.8;
pub const BRIGHTNESS_HI: f64 = 1.2;
pub const FLIP_PROBABILITY: f64 = 0.5;

/// An RGB image: row-major rows of interleaved `[r, g, b]` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape(
                "Image::new",
                "width and height must be positive",
            ));
        }
        if data.len() != width * height * CHANNELS {
            return Err(Error::shape(
                "Image::new",
                format!(
                    "{}x{} RGB needs {} samples, got {}",
                    width,
                    height,
                    width * height * CHANNELS,
                    data.len()
                ),
            ));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Image::new(width, height, vec![value; width * height * CHANNELS])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; CHANNELS] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; CHANNELS]) {
        let i = (y * self.width + x) * CHANNELS;
        self.data[i..i + CHANNELS].copy_from_slice(&rgb);
    }

    /// Serializes as binary PPM, quantizing each sample to one byte with
    /// round-to-nearest after clamping to `[0, 1]`.
    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let header = format!("P6\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.data.len());
        out.extend_from_slice(header.as_bytes());
        out.extend(
            self.data
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let magic = next_header_token(bytes, &mut pos)
            .ok_or_else(|| Error::data("ppm: missing magic number"))?;
        if magic != b"P6" {
            return Err(Error::data(format!(
                "ppm: expected binary P6, found {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let mut field = |name: &str| -> Result<usize> {
            let tok = next_header_token(bytes, &mut pos)
                .ok_or_else(|| Error::data(format!("ppm: missing {name}")))?;
            std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| {
                    Error::data(format!(
                        "ppm: bad {name} {:?}",
                        String::from_utf8_lossy(tok)
                    ))
                })
        };
        let width = field("width")?;
        let height = field("height")?;
        let maxval = field("maxval")?;
        if maxval != 255 {
            return Err(Error::data(format!(
                "ppm: only maxval 255 is supported, got {maxval}"
            )));
        }
        // Exactly one whitespace byte separates the header from the raster.
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(Error::data("ppm: missing raster separator"));
        }
        pos += 1;
        let need = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(CHANNELS))
            .ok_or_else(|| Error::data("ppm: dimensions overflow"))?;
        let raster = &bytes[pos..];
        if raster.len() != need {
            return Err(Error::data(format!(
                "ppm: {width}x{height} raster needs {need} bytes, found {}",
                raster.len()
            )));
        }
        let data = raster.iter().map(|&b| f64::from(b) / 255.0).collect();
        Image::new(width, height, data)
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_ppm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::from_ppm_bytes(&bytes).map_err(|e| match e {
            Error::Data { details } => Error::parse(path.display().to_string(), details),
            other => other,
        })
    }
}

/// Advances past whitespace and `#` comments, then returns the next
/// header token.
fn next_header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

/// Source coordinate for destination index `i` under corner alignment:
/// the first and last destination samples land exactly on the first and
/// last source samples.
fn src_coord(i: usize, src_len: usize, dst_len: usize) -> f64 {
    if dst_len == 1 {
        (src_len as f64 - 1.0) / 2.0
    } else {
        i as f64 * (src_len as f64 - 1.0) / (dst_len as f64 - 1.0)
    }
}

/// Bilinear sample at fractional coordinates; `None` outside the image.
fn sample_bilinear(img: &Image, x: f64, y: f64) -> Option<[f64; CHANNELS]> {
    let (w, h) = (img.width as f64, img.height as f64);
    if !(0.0..=w - 1.0).contains(&x) || !(0.0..=h - 1.0).contains(&y) {
        return None;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let mut out = [0.0; CHANNELS];
    let (a, b, c, d) = (
        img.pixel(x0, y0),
        img.pixel(x1, y0),
        img.pixel(x0, y1),
        img.pixel(x1, y1),
    );
    for ch in 0..CHANNELS {
        let top = a[ch] * (1.0 - fx) + b[ch] * fx;
        let bot = c[ch] * (1.0 - fx) + d[ch] * fx;
        out[ch] = top * (1.0 - fy) + bot * fy;
    }
    Some(out)
}

/// Corner-aligned bilinear resize. Resizing to the source size is exact,
/// and corner pixels always map to corner pixels.
pub fn resize_bilinear(img: &Image, new_width: usize, new_height: usize) -> Result<Image> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::parameter(
            "resize_bilinear",
            "target dimensions must be positive",
        ));
    }
    let mut out = Image::filled(new_width, new_height, 0.0)?;
    for y in 0..new_height {
        let sy = src_coord(y, img.height, new_height);
        for x in 0..new_width {
            let sx = src_coord(x, img.width, new_width);
            let rgb = sample_bilinear(img, sx, sy).expect("corner alignment stays in range");
            out.set_pixel(x, y, rgb);
        }
    }
    Ok(out)
}

/// Rotates about the image center by `degrees` (counter-clockwise),
/// sampling bilinearly and filling uncovered pixels with zero.
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = (img.width as f64 - 1.0) / 2.0;
    let cy = (img.height as f64 - 1.0) / 2.0;
    let mut out = Image::filled(img.width, img.height, 0.0).expect("same dims as source");
    for y in 0..img.height {
        for x in 0..img.width {
            // Inverse mapping: where in the source does this pixel come from?
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            if let Some(rgb) = sample_bilinear(img, sx, sy) {
                out.set_pixel(x, y, rgb);
            }
        }
    }
    out
}

/// Mirrors left-right. An involution: flipping twice restores the input.
pub fn hflip(img: &Image) -> Image {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            out.set_pixel(img.width - 1 - x, y, img.pixel(x, y));
        }
    }
    out
}

/// Scales every sample by `factor` without clamping.
pub fn adjust_brightness(img: &Image, factor: f64) -> Image {
    let data = img.data.iter().map(|&v| v * factor).collect();
    Image {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Clamps every sample to `[0, 1]`.
pub fn clamp01(img: &Image) -> Image {
    let data = img.data.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
    Image {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Training-time jitter: random rotation within +-15 degrees, a fair
/// horizontal flip, brightness scaled by U[0.8, 1.2], then a clamp back
/// to `[0, 1]`. Draws exactly three RNG values regardless of outcomes.
pub fn augment(img: &Image, rng: &mut impl Rng) -> Image {
    let degrees = rng.gen_range(-MAX_ROTATE_DEGREES..=MAX_ROTATE_DEGREES);
    let flip = rng.gen::<f64>() < FLIP_PROBABILITY;
    let factor = rng.gen_range(BRIGHTNESS_LO..=BRIGHTNESS_HI);
    let mut out = rotate(img, degrees);
    if flip {
        out = hflip(&out);
    }
    clamp01(&adjust_brightness(&out, factor))
}

/// Mirror index for radius-1 kernels: `-1` reflects to `0`, `n` to `n-1`.
fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i - 1) as usize
    } else if i as usize >= n {
        2 * n - 1 - i as usize
    } else {
        i as usize
    }
}

/// 3x3 Gaussian blur (the separable `[1, 2, 1]` kernel, total weight 16)
/// with reflected edges.
pub fn gaussian_blur3(img: &Image) -> Image {
    let (w, h) = (img.width, img.height);
    // Horizontal pass, then vertical pass.
    let mut tmp = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                let at = |xx: isize| img.data[(y * w + reflect(xx, w)) * CHANNELS + c];
                let x = x as isize;
                tmp[(y * w + x as usize) * CHANNELS + c] =
                    (at(x - 1) + 2.0 * at(x) + at(x + 1)) / 4.0;
            }
        }
    }
    let mut data = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                let at = |yy: isize| tmp[(reflect(yy, h) * w + x) * CHANNELS + c];
                let y = y as isize;
                data[(y as usize * w + x) * CHANNELS + c] =
                    (at(y - 1) + 2.0 * at(y) + at(y + 1)) / 4.0;
            }
        }
    }
    Image {
        width: w,
        height: h,
        data,
    }
}

/// Unsharp masking: `clamp(2*img - blur(img))`. Uniform regions pass
/// through unchanged; edges gain contrast.
pub fn unsharp_mask(img: &Image) -> Image {
    let blur = gaussian_blur3(img);
    let data = img
        .data
        .iter()
        .zip(&blur.data)
        .map(|(&v, &b)| (2.0 * v - b).clamp(0.0, 1.0))
        .collect();
    Image {
        width: img.width,
        height: img.height,
        data,
    }
}
