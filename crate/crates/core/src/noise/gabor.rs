use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::NoiseField;
use crate::params::{GaborParams, NoiseKind, ProceduralParams};

/// Expected number of kernels overlapping any pixel.
const COVERAGE: f64 = 4.0;
const MIN_POINTS: usize = 8;
const MIN_WINDOW: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("field has zero RMS and cannot be normalized")]
pub struct DegenerateField;

/// Gabor kernel in closed form: `exp(-π a² (x²+y²)) · cos(2π/λ · (x cos ω + y sin ω))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborKernel {
    /// Gaussian bandwidth `a` (inverse width).
    pub bandwidth: f64,
    pub lambda: f64,
    pub omega: f64,
}

impl GaborKernel {
    /// Kernel whose Gaussian has standard deviation `p.sigma` pixels, oriented at `omega`.
    pub fn from_params(p: &GaborParams, omega: f64) -> Self {
        GaborKernel {
            bandwidth: 1.0 / (p.sigma * (2.0 * PI).sqrt()),
            lambda: p.lambda,
            omega,
        }
    }

    /// Distance beyond which the Gaussian factor is below `e^-9`.
    pub fn radius(&self) -> f64 {
        3.0 / (self.bandwidth * PI.sqrt())
    }
}

pub fn gabor_kernel(x: f64, y: f64, k: &GaborKernel) -> f64 {
    let envelope = (-PI * k.bandwidth * k.bandwidth * (x * x + y * y)).exp();
    let phase = 2.0 * PI / k.lambda * (x * k.omega.cos() + y * k.omega.sin());
    envelope * phase.cos()
}

fn kernel_radius(p: &GaborParams) -> f64 {
    GaborKernel::from_params(p, 0.0).radius()
}

/// Seeded impulse positions, spread over the image plus a margin so that
/// kernels centred just outside the frame still contribute.
pub fn gabor_points(p: &GaborParams, side: usize, seed: u64) -> Vec<(f64, f64)> {
    let r = kernel_radius(p);
    let margin = r.min(side as f64);
    let extent = side as f64 + 2.0 * margin;
    let count = ((COVERAGE * extent * extent / (PI * r * r)).ceil() as usize).max(MIN_POINTS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            (-margin + extent * u, -margin + extent * v)
        })
        .collect()
}

/// Sparse convolution of the impulses with a single-orientation kernel.
pub fn gabor_orientation_sum(p: &GaborParams, side: usize, points: &[(f64, f64)], omega: f64) -> Vec<f64> {
    let k = GaborKernel::from_params(p, omega);
    let r = k.radius();
    let r2 = r * r;
    let decay = PI * k.bandwidth * k.bandwidth;
    let (c, s) = (omega.cos(), omega.sin());
    let freq = 2.0 * PI / k.lambda;
    let mut out = vec![0.0; side * side];
    let max = side as f64 - 1.0;
    for &(px, py) in points {
        let x0 = (px - r).ceil().max(0.0);
        let x1 = (px + r).floor().min(max);
        let y0 = (py - r).ceil().max(0.0);
        let y1 = (py + r).floor().min(max);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for y in y0 as usize..=y1 as usize {
            let dy = y as f64 - py;
            for x in x0 as usize..=x1 as usize {
                let dx = x as f64 - px;
                let d2 = dx * dx + dy * dy;
                if d2 > r2 {
                    continue;
                }
                out[y * side + x] += (-decay * d2).exp() * (freq * (dx * c + dy * s)).cos();
            }
        }
    }
    out
}

/// Pre-normalization Gabor noise: the mean over `xi` orientations `ω + nπ/ξ`, `n = 1..=ξ`.
pub fn gabor_raw(p: &GaborParams, side: usize, seed: u64) -> Vec<f64> {
    let points = gabor_points(p, side, seed);
    let xi = p.xi.max(1);
    let mut acc = vec![0.0; side * side];
    for n in 1..=xi {
        let omega = p.omega + n as f64 * PI / xi as f64;
        for (a, v) in acc.iter_mut().zip(gabor_orientation_sum(p, side, &points, omega)) {
            *a += v;
        }
    }
    let inv = 1.0 / xi as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    acc
}

pub fn window_sigma(p: &GaborParams) -> f64 {
    kernel_radius(p).max(MIN_WINDOW)
}

pub fn gabor_field(p: &GaborParams, side: usize, seed: u64) -> NoiseField {
    let raw = gabor_raw(p, side, seed);
    let values = normalize_variance(&raw, side, window_sigma(p)).unwrap_or_else(|_| vec![0.0; side * side]);
    NoiseField {
        kind: NoiseKind::Gabor,
        seed,
        side,
        channels: 1,
        params: Some(ProceduralParams::Gabor(*p)),
        values,
    }
}

/// Separable Gaussian blur; weights are renormalized where the window leaves the grid.
fn gaussian_blur(grid: &[f64], side: usize, sigma: f64) -> Vec<f64> {
    let radius = ((3.0 * sigma).ceil() as usize).min(side.saturating_sub(1));
    let weights: Vec<f64> = (0..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut dst = vec![0.0; side * side];
        for a in 0..side {
            for b in 0..side {
                let (mut sum, mut wsum) = (0.0, 0.0);
                let lo = b.saturating_sub(radius);
                let hi = (b + radius).min(side - 1);
                for t in lo..=hi {
                    let w = weights[t.abs_diff(b)];
                    let idx = if horizontal { a * side + t } else { t * side + a };
                    sum += w * src[idx];
                    wsum += w;
                }
                let idx = if horizontal { a * side + b } else { b * side + a };
                dst[idx] = sum / wsum;
            }
        }
        dst
    };
    let h = pass(grid, true);
    pass(&h, false)
}

/// Local-contrast equalization: divides by the Gaussian-weighted local RMS and
/// clamps to `[-1, 1]`, turning uneven oscillations into min-max ones.
pub fn normalize_variance(raw: &[f64], side: usize, window_sigma: f64) -> Result<Vec<f64>, DegenerateField> {
    let n = raw.len() as f64;
    let global_ms = raw.iter().map(|v| v * v).sum::<f64>() / n;
    if global_ms <= 0.0 || !global_ms.is_finite() {
        return Err(DegenerateField);
    }
    let squares: Vec<f64> = raw.iter().map(|v| v * v).collect();
    let local_ms = gaussian_blur(&squares, side, window_sigma);
    let floor = global_ms * 1e-12;
    Ok(raw
        .iter()
        .zip(&local_ms)
        .map(|(v, ms)| (v / (ms + floor).sqrt()).clamp(-1.0, 1.0))
        .collect())
}
