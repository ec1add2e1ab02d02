//! Deterministic desk-scale classifier built from a seeded Gabor filter bank.
//!
//! Logits are class-weighted, average-pooled absolute filter responses, so the
//! decision surface is sensitive to orientation and spatial frequency in the
//! same way early convolutional layers are.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use url::Url;

use super::{ClassProb, Oracle, OracleError, OracleVerdict};
use crate::image_ops::Image;

pub const BANK_SIZE: usize = ORIENTATIONS * WAVELENGTHS.len();
const ORIENTATIONS: usize = 4;
const WAVELENGTHS: [f64; 4] = [2.5, 4.0, 6.5, 10.0];
const MAX_ENVELOPE: f64 = 4.0;
/// Border left out of pooling so every filter sees a full window.
const MARGIN: usize = 8;
const STRIDE: usize = 2;
const GAIN: f64 = 150.0;
const WEIGHT_JITTER: f64 = 0.25;
const CORPUS_AMPLITUDE: (f64, f64) = (4.0, 16.0);
const CORPUS_MIN_WAVELENGTH: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyOracleSpec {
    pub seed: u64,
    pub side: usize,
    pub classes: usize,
    pub temperature: f64,
}

impl ToyOracleSpec {
    pub fn new(seed: u64, side: usize, classes: usize) -> Self {
        ToyOracleSpec {
            seed,
            side,
            classes,
            temperature: 1.0,
        }
    }

    /// Parses `toy://?seed=S&side=D&classes=C`.
    pub fn from_uri(uri: &str) -> Result<Self, OracleError> {
        let url = Url::parse(uri).map_err(|e| OracleError::Config(format!("{uri}: {e}")))?;
        if url.scheme() != "toy" {
            return Err(OracleError::Config(format!("{uri}: expected toy:// scheme")));
        }
        let (mut seed, mut side, mut classes) = (None, None, None);
        for (k, v) in url.query_pairs() {
            let parsed: u64 = v
                .parse()
                .map_err(|_| OracleError::Config(format!("{uri}: `{k}` is not a non-negative integer")))?;
            match k.as_ref() {
                "seed" => seed = Some(parsed),
                "side" => side = Some(parsed as usize),
                "classes" => classes = Some(parsed as usize),
                other => return Err(OracleError::Config(format!("{uri}: unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| OracleError::Config(format!("{uri}: missing `{k}`"));
        Ok(ToyOracleSpec::new(
            seed.ok_or_else(|| missing("seed"))?,
            side.ok_or_else(|| missing("side"))?,
            classes.ok_or_else(|| missing("classes"))?,
        ))
    }

    pub fn to_uri(&self) -> String {
        format!("toy://?seed={}&side={}&classes={}", self.seed, self.side, self.classes)
    }
}

/// One filter of the bank and the class it votes for.
#[derive(Debug, Clone, PartialEq)]
pub struct BankFilter {
    pub orientation: f64,
    pub wavelength: f64,
    pub owner: usize,
    pub radius: usize,
    /// `(2r+1)²` taps, zero-mean with unit L1 norm.
    pub taps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ToyOracle {
    spec: ToyOracleSpec,
    filters: Vec<BankFilter>,
    weights: Vec<[f64; BANK_SIZE]>,
}

fn build_filter(orientation: f64, wavelength: f64, owner: usize) -> BankFilter {
    let s = (0.5 * wavelength).min(MAX_ENVELOPE);
    let radius = (2.0 * s).ceil() as usize;
    let r = radius as isize;
    let (c, sn) = (orientation.cos(), orientation.sin());
    let mut taps = Vec::with_capacity((2 * radius + 1).pow(2));
    for v in -r..=r {
        for u in -r..=r {
            let (uf, vf) = (u as f64, v as f64);
            let env = (-(uf * uf + vf * vf) / (2.0 * s * s)).exp();
            taps.push(env * (TAU / wavelength * (uf * c + vf * sn)).cos());
        }
    }
    let mean = taps.iter().sum::<f64>() / taps.len() as f64;
    taps.iter_mut().for_each(|t| *t -= mean);
    let l1: f64 = taps.iter().map(|t| t.abs()).sum();
    taps.iter_mut().for_each(|t| *t /= l1);
    BankFilter {
        orientation,
        wavelength,
        owner,
        radius,
        taps,
    }
}

/// Classes partition the bank orientation-major, so each class owns a run of
/// neighbouring wavelengths at one orientation.
fn owner(q: usize, o: usize, classes: usize) -> usize {
    (o * WAVELENGTHS.len() + q) * classes / BANK_SIZE
}

impl ToyOracle {
    pub fn new(spec: ToyOracleSpec) -> Result<Self, OracleError> {
        if spec.classes < 2 || spec.classes > BANK_SIZE {
            return Err(OracleError::Config(format!("toy oracle needs 2..={BANK_SIZE} classes, got {}", spec.classes)));
        }
        if spec.side < 2 * MARGIN + 1 {
            return Err(OracleError::Config(format!("toy oracle needs side ≥ {}, got {}", 2 * MARGIN + 1, spec.side)));
        }
        if !(spec.temperature > 0.0) {
            return Err(OracleError::Config("temperature must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut filters = Vec::with_capacity(BANK_SIZE);
        for (q, base) in WAVELENGTHS.iter().enumerate() {
            for o in 0..ORIENTATIONS {
                let orientation = o as f64 * PI / ORIENTATIONS as f64 + rng.random_range(-PI / 32.0..PI / 32.0);
                let wavelength = base * rng.random_range(0.9..1.1);
                filters.push(build_filter(orientation, wavelength, owner(q, o, spec.classes)));
            }
        }
        let weights = (0..spec.classes)
            .map(|c| {
                let mut row = [0.0; BANK_SIZE];
                for (f, w) in row.iter_mut().enumerate() {
                    let own = if filters[f].owner == c { 1.0 } else { 0.0 };
                    *w = own + rng.random_range(-WEIGHT_JITTER..WEIGHT_JITTER);
                }
                row
            })
            .collect();
        Ok(ToyOracle { spec, filters, weights })
    }

    pub fn spec(&self) -> &ToyOracleSpec {
        &self.spec
    }

    pub fn filters(&self) -> &[BankFilter] {
        &self.filters
    }

    pub fn weights(&self) -> &[[f64; BANK_SIZE]] {
        &self.weights
    }

    /// Pooling positions along one axis.
    pub fn positions(&self) -> impl Iterator<Item = usize> + Clone {
        (MARGIN..self.spec.side - MARGIN).step_by(STRIDE)
    }

    /// Mean absolute response of every filter on the luminance scaled to `[0, 1]`.
    pub fn features(&self, image: &Image) -> [f64; BANK_SIZE] {
        let side = self.spec.side;
        let gray: Vec<f64> = image.luminance().iter().map(|v| v / 255.0).collect();
        let mut out = [0.0; BANK_SIZE];
        let positions: Vec<usize> = self.positions().collect();
        let count = (positions.len() * positions.len()) as f64;
        for (f, filter) in self.filters.iter().enumerate() {
            let r = filter.radius;
            let width = 2 * r + 1;
            let mut acc = 0.0;
            for &py in &positions {
                for &px in &positions {
                    let mut resp = 0.0;
                    for dv in 0..width {
                        let row = (py + dv - r) * side + px - r;
                        let taps = &filter.taps[dv * width..(dv + 1) * width];
                        resp += taps.iter().zip(&gray[row..row + width]).map(|(t, g)| t * g).sum::<f64>();
                    }
                    acc += resp.abs();
                }
            }
            out[f] = acc / count;
        }
        out
    }

    pub fn logits(&self, image: &Image) -> Vec<f64> {
        let features = self.features(image);
        self.weights
            .iter()
            .map(|w| GAIN * w.iter().zip(&features).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub fn probabilities(&self, image: &Image) -> Vec<f64> {
        let logits = self.logits(image);
        let t = self.spec.temperature;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / t).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.iter().map(|e| e / z).collect()
    }

    /// Full-frame grating at filter `f`'s orientation and wavelength.
    pub fn render_filter(&self, f: usize) -> Image {
        let filter = &self.filters[f];
        let (c, s) = (filter.orientation.cos(), filter.orientation.sin());
        Image::from_fn(self.spec.side, |x, y, _| {
            127.5 + 127.5 * (TAU / filter.wavelength * (x as f64 * c + y as f64 * s)).cos()
        })
    }

    /// Synthetic labelled images: each shows an oriented grating matched to one
    /// of its class's filters over a smooth tinted background with pixel noise.
    /// Like natural images they carry little energy near Nyquist, so filters
    /// finer than `CORPUS_MIN_WAVELENGTH` are used only by classes owning nothing coarser.
    pub fn corpus(&self, count: usize, seed: u64) -> Vec<(Image, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0ff_ee00_0000);
        let side = self.spec.side;
        (0..count)
            .map(|i| {
                let label = i % self.spec.classes;
                let owned: Vec<&BankFilter> = self.filters.iter().filter(|f| f.owner == label).collect();
                let coarse: Vec<&BankFilter> =
                    owned.iter().copied().filter(|f| f.wavelength >= CORPUS_MIN_WAVELENGTH).collect();
                let owned = if coarse.is_empty() { owned } else { coarse };
                let f = owned[rng.random_range(0..owned.len())];
                let theta = f.orientation + rng.random_range(-0.08..0.08);
                let wavelength = f.wavelength * rng.random_range(0.9..1.1);
                let amplitude = rng.random_range(CORPUS_AMPLITUDE.0..CORPUS_AMPLITUDE.1);
                let phase = rng.random_range(0.0..TAU);
                let base = rng.random_range(80.0..176.0);
                let blob = rng.random_range(0.0..30.0);
                let (lx, ly) = (rng.random_range(2.0..4.0) * side as f64, rng.random_range(2.0..4.0) * side as f64);
                let (bp1, bp2) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
                let tint = [rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0)];
                let (c, s) = (theta.cos(), theta.sin());
                let mut noise = ChaCha8Rng::seed_from_u64(rng.random());
                let image = Image::from_fn(side, |x, y, ch| {
                    let (xf, yf) = (x as f64, y as f64);
                    let background = base + blob * (TAU * xf / lx + bp1).sin() * (TAU * yf / ly + bp2).cos();
                    let grating = amplitude * (TAU / wavelength * (xf * c + yf * s) + phase).cos();
                    background + grating + tint[ch] + noise.random_range(-4.0..4.0)
                });
                (image, label)
            })
            .collect()
    }
}

impl Oracle for ToyOracle {
    fn query(&self, image: &Image, top_k: usize) -> Result<OracleVerdict, OracleError> {
        if image.side() != self.spec.side {
            return Err(OracleError::Transport(format!(
                "toy oracle expects side {}, got {}",
                self.spec.side,
                image.side()
            )));
        }
        let probs = self.probabilities(image);
        let mut order: Vec<usize> = (0..probs.len()).collect();
        // stable sort: ties resolve to the lowest class index
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
        let labels: Vec<ClassProb> = order
            .iter()
            .take(top_k.max(1))
            .map(|&c| ClassProb { class: c, prob: probs[c] })
            .collect();
        Ok(OracleVerdict {
            top: order[0],
            probs: Some(labels),
            latency: None,
        })
    }

    fn side(&self) -> Option<usize> {
        Some(self.spec.side)
    }

    fn classes(&self) -> Option<usize> {
        Some(self.spec.classes)
    }
}
