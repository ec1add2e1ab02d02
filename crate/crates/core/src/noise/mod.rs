//! Deterministic perturbation generators: Gabor noise, Perlin noise and the
//! uniform random sign baseline.
//!
//! Every generator is a pure function of `(params, side, seed)`. Procedural
//! fields are single-channel and get replicated over RGB when scaled into a
//! [`PerturbationField`]; the uniform baseline is generated per channel.

mod gabor;
mod perlin;
mod uniform;

pub use gabor::{
    gabor_field, gabor_kernel, gabor_orientation_sum, gabor_points, gabor_raw, normalize_variance,
    window_sigma, DegenerateField, GaborKernel,
};
pub use perlin::{fade, perlin_field, perlin_octave_sum, perlin_value, sine_colour_map, PerlinLattice};
pub use uniform::uniform_random_field;

use serde::{Deserialize, Serialize};

use crate::image_ops::PerturbationField;
use crate::params::{NoiseKind, ProceduralParams};

/// A pre-scaling noise field with every entry in `[-1, 1]`.
///
/// `values` is row-major with `channels` interleaved entries per pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseField {
    pub kind: NoiseKind,
    pub seed: u64,
    pub side: usize,
    pub channels: usize,
    pub params: Option<ProceduralParams>,
    pub values: Vec<f64>,
}

impl NoiseField {
    /// Channel value at `(x, y)`; single-channel fields broadcast.
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        let c = if self.channels == 1 { 0 } else { c };
        self.values[(y * self.side + x) * self.channels + c]
    }
}

/// Generates the field described by `params`, or the uniform baseline when `params` is `None`.
pub fn generate(params: Option<&ProceduralParams>, side: usize, seed: u64) -> NoiseField {
    match params {
        Some(ProceduralParams::Gabor(p)) => gabor_field(p, side, seed),
        Some(ProceduralParams::Perlin(p)) => perlin_field(p, side, seed),
        None => uniform_random_field(side, seed),
    }
}

/// Scales a field by `eps`, clips to `[-eps, eps]` and broadcasts to three channels.
pub fn to_perturbation(field: &NoiseField, eps: f64) -> PerturbationField {
    let eps = eps.max(0.0);
    let n = field.side * field.side;
    let mut values = Vec::with_capacity(n * 3);
    for i in 0..n {
        for c in 0..3 {
            let v = if field.channels == 1 {
                field.values[i]
            } else {
                field.values[i * field.channels + c]
            };
            values.push((eps * v).clamp(-eps, eps));
        }
    }
    PerturbationField::new(field.side, values, eps)
}
