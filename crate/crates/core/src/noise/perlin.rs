use std::f64::consts::{PI, SQRT_2, TAU};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::NoiseField;
use crate::params::{NoiseKind, PerlinParams, ProceduralParams};

const TABLE_SIZE: usize = 256;
const GRADIENTS: usize = 8;

/// Permutation table `Q` and gradient table `V` of a Perlin lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct PerlinLattice {
    permutation: Vec<usize>,
    gradients: Vec<[f64; 2]>,
    seed: u64,
}

impl PerlinLattice {
    /// Seeded shuffle of `0..256`; eight unit gradients at angles `2πk/8`.
    pub fn new(seed: u64) -> Self {
        let mut permutation: Vec<usize> = (0..TABLE_SIZE).collect();
        permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let gradients = (0..GRADIENTS)
            .map(|k| {
                let a = TAU * k as f64 / GRADIENTS as f64;
                [a.cos(), a.sin()]
            })
            .collect();
        PerlinLattice {
            permutation,
            gradients,
            seed,
        }
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn gradients(&self) -> &[[f64; 2]] {
        &self.gradients
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `V[Q[(Q[i] + j) mod 256] mod |V|]` with `i`, `j` reduced mod 256.
    #[inline]
    pub fn gradient(&self, i: i64, j: i64) -> [f64; 2] {
        let n = TABLE_SIZE as i64;
        let qi = self.permutation[i.rem_euclid(n) as usize];
        let h = self.permutation[(qi + j.rem_euclid(n) as usize) % TABLE_SIZE];
        self.gradients[h % self.gradients.len()]
    }
}

/// Quintic interpolant `6t⁵ − 15t⁴ + 10t³`.
#[inline]
pub fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Single-octave Perlin value, rescaled by `1/(√2/2)` so it lies in `[-1, 1]`.
pub fn perlin_value(x: f64, y: f64, lattice: &PerlinLattice) -> f64 {
    let (xf, yf) = (x.floor(), y.floor());
    let (i, j) = (xf as i64, yf as i64);
    let (fx, fy) = (x - xf, y - yf);
    let dot = |gi: i64, gj: i64, dx: f64, dy: f64| {
        let g = lattice.gradient(gi, gj);
        g[0] * dx + g[1] * dy
    };
    let n00 = dot(i, j, fx, fy);
    let n10 = dot(i + 1, j, fx - 1.0, fy);
    let n01 = dot(i, j + 1, fx, fy - 1.0);
    let n11 = dot(i + 1, j + 1, fx - 1.0, fy - 1.0);
    let (u, v) = (fade(fx), fade(fy));
    lerp(lerp(n00, n10, u), lerp(n01, n11, u), v) * SQRT_2
}

/// `C(p) = sin(2π φ p)`.
#[inline]
pub fn sine_colour_map(p: f64, phi_sine: f64) -> f64 {
    (p * 2.0 * PI * phi_sine).sin()
}

/// Octave sum at pixel `(x, y)`: `Σ_{n=1}^{Ω} noise(n, x·2^{n−1}/λx, y·2^{n−1}/λy)`.
///
/// `noise` receives the 1-based octave index so callers can substitute sources per octave.
pub fn perlin_octave_sum<F>(p: &PerlinParams, x: f64, y: f64, mut noise: F) -> f64
where
    F: FnMut(u32, f64, f64) -> f64,
{
    (1..=p.octaves)
        .map(|n| {
            let scale = (1u64 << (n - 1)) as f64;
            noise(n, x * scale / p.lambda_x, y * scale / p.lambda_y)
        })
        .sum()
}

pub fn perlin_field(p: &PerlinParams, side: usize, seed: u64) -> NoiseField {
    let lattice = PerlinLattice::new(seed);
    let mut values = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let s = perlin_octave_sum(p, x as f64, y as f64, |_, u, v| perlin_value(u, v, &lattice));
            values.push(sine_colour_map(s, p.phi_sine));
        }
    }
    NoiseField {
        kind: NoiseKind::Perlin,
        seed,
        side,
        channels: 1,
        params: Some(ProceduralParams::Perlin(*p)),
        values,
    }
}
