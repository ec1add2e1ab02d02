//! RGB image tensors on the 0–255 scale, perturbation application, median
//! filtering and 8-bit PNG I/O.
//!
//! Pixels are kept as `f64` through a pipeline and only quantized (round half
//! to even) when encoding a PNG.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use thiserror::Error;

pub const CHANNELS: usize = 3;
pub const PIXEL_MAX: f64 = 255.0;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("median window {k} must be odd, at least 3 and at most the side {side}")]
    BadWindow { k: usize, side: usize },
    #[error("pixel buffer of length {len} does not hold a {side}x{side}x3 image")]
    BadBuffer { len: usize, side: usize },
    #[error("only square 8-bit RGB PNGs are supported ({0})")]
    UnsupportedFormat(String),
    #[error("png decode: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("png encode: {0}")]
    Encode(#[from] png::EncodingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A `side × side × 3` image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    side: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Builds an image, clamping every value into `[0, 255]`.
    pub fn new(side: usize, mut pixels: Vec<f64>) -> Result<Self, ImageError> {
        if pixels.len() != side * side * CHANNELS {
            return Err(ImageError::BadBuffer {
                len: pixels.len(),
                side,
            });
        }
        pixels.iter_mut().for_each(|p| *p = p.clamp(0.0, PIXEL_MAX));
        Ok(Image { side, pixels })
    }

    pub fn filled(side: usize, value: f64) -> Self {
        Image {
            side,
            pixels: vec![value.clamp(0.0, PIXEL_MAX); side * side * CHANNELS],
        }
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(side * side * CHANNELS);
        for y in 0..side {
            for x in 0..side {
                for c in 0..CHANNELS {
                    pixels.push(f(x, y, c).clamp(0.0, PIXEL_MAX));
                }
            }
        }
        Image { side, pixels }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.side + x) * CHANNELS + c]
    }

    /// Channel mean at every pixel, still on the 0–255 scale.
    pub fn luminance(&self) -> Vec<f64> {
        self.pixels.chunks_exact(CHANNELS).map(|p| p.iter().sum::<f64>() / CHANNELS as f64).collect()
    }

    /// 8-bit quantization, round half to even.
    pub fn quantized(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| p.round_ties_even().clamp(0.0, PIXEL_MAX) as u8).collect()
    }
}

/// A signed perturbation with `max |value| ≤ eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationField {
    side: usize,
    values: Vec<f64>,
    eps: f64,
}

impl PerturbationField {
    /// Builds a field, clipping every value into `[-eps, eps]`.
    pub fn new(side: usize, mut values: Vec<f64>, eps: f64) -> Self {
        assert_eq!(values.len(), side * side * CHANNELS, "perturbation buffer size");
        values.iter_mut().for_each(|v| *v = v.clamp(-eps, eps));
        PerturbationField { side, values, eps }
    }

    pub fn zero(side: usize) -> Self {
        PerturbationField {
            side,
            values: vec![0.0; side * side * CHANNELS],
            eps: 0.0,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `clip(x + s, 0, 255)`.
pub fn apply(x: &Image, s: &PerturbationField) -> Result<Image, ImageError> {
    if x.side != s.side {
        return Err(ImageError::DimensionMismatch(x.side, s.side));
    }
    let pixels = x
        .pixels
        .iter()
        .zip(&s.values)
        .map(|(p, d)| (p + d).clamp(0.0, PIXEL_MAX))
        .collect();
    Ok(Image { side: x.side, pixels })
}

/// Mirror index without repeating the edge sample: -1 → 1, n → n-2.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// Per-channel `k × k` median with reflect padding.
pub fn median_filter(x: &Image, k: usize) -> Result<Image, ImageError> {
    let side = x.side;
    if k < 3 || k % 2 == 0 || k > side {
        return Err(ImageError::BadWindow { k, side });
    }
    let half = (k / 2) as isize;
    let mut window = Vec::with_capacity(k * k);
    let mut pixels = vec![0.0; x.pixels.len()];
    for y in 0..side {
        for xx in 0..side {
            for c in 0..CHANNELS {
                window.clear();
                for dy in -half..=half {
                    let sy = reflect(y as isize + dy, side);
                    for dx in -half..=half {
                        let sx = reflect(xx as isize + dx, side);
                        window.push(x.get(sx, sy, c));
                    }
                }
                let mid = window.len() / 2;
                let (_, m, _) = window.select_nth_unstable_by(mid, f64::total_cmp);
                pixels[(y * side + xx) * CHANNELS + c] = *m;
            }
        }
    }
    Ok(Image { side, pixels })
}

/// Maps a perturbation to a viewable image: `(s + eps) · 255 / (2 eps)`.
pub fn render_perturbation(s: &PerturbationField) -> Image {
    let eps = s.eps;
    let scale = if eps > 0.0 { PIXEL_MAX / (2.0 * eps) } else { 0.0 };
    let pixels = s
        .values
        .iter()
        .map(|v| if eps > 0.0 { ((v + eps) * scale).clamp(0.0, PIXEL_MAX) } else { PIXEL_MAX / 2.0 })
        .collect();
    Image { side: s.side, pixels }
}

pub fn encode_png(x: &Image) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, x.side as u32, x.side as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(&x.quantized())?;
        w.finish()?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, ImageError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let info = reader.info();
    let (w, h, color, depth) = (info.width, info.height, info.color_type, info.bit_depth);
    if color != png::ColorType::Rgb || depth != png::BitDepth::Eight {
        return Err(ImageError::UnsupportedFormat(format!("{color:?} {depth:?}")));
    }
    if w != h {
        return Err(ImageError::UnsupportedFormat(format!("{w}x{h} is not square")));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::UnsupportedFormat("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf)?;
    buf.truncate(frame.buffer_size());
    let pixels = buf.iter().map(|&b| b as f64).collect();
    Image::new(w as usize, pixels)
}

pub fn load_png(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    decode_png(&fs::read(path)?)
}

pub fn save_png(x: &Image, path: impl AsRef<Path>) -> Result<(), ImageError> {
    fs::write(path, encode_png(x)?)?;
    Ok(())
}
