//! Gaussian-process regression with a Matérn 5/2 kernel and the acquisition
//! functions used to drive Bayesian optimization.

mod bo;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

pub use self::bo::{bayes_minimize, candidates, propose_next, BoConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("kernel matrix is not positive definite even with noise variance {noise_variance}")]
    IllConditioned { noise_variance: f64 },
    #[error("invalid kernel configuration: {0}")]
    BadConfig(String),
    #[error("{xs} points but {ys} values")]
    Shape { xs: usize, ys: usize },
}

/// Hyperparameters. Length scales are per dimension of the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub length_scale: Vec<f64>,
    pub amplitude: f64,
    pub noise_variance: f64,
}

impl KernelConfig {
    pub fn new(dim: usize) -> Self {
        KernelConfig {
            length_scale: vec![0.2; dim],
            amplitude: 1.0,
            noise_variance: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if self.length_scale.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(GpError::BadConfig("length scales must be positive".into()));
        }
        if !(self.amplitude > 0.0) {
            return Err(GpError::BadConfig("amplitude must be positive".into()));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(GpError::BadConfig("noise variance must be non-negative".into()));
        }
        Ok(())
    }
}

/// amplitude·(1 + √5 r + 5r²/3)·exp(−√5 r), r the length-scaled distance.
pub fn matern52(x: &[f64], x2: &[f64], k: &KernelConfig) -> f64 {
    let r2: f64 = x
        .iter()
        .zip(x2)
        .zip(&k.length_scale)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    let sr = (5.0 * r2).sqrt();
    k.amplitude * (1.0 + sr + 5.0 * r2 / 3.0) * (-sr).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Zero-mean GP conditioned on a set of observations.
#[derive(Debug, Clone)]
pub struct GpModel {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    kernel: KernelConfig,
    /// Row-major lower Cholesky factor of K + σ²I.
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

/// In-place lower Cholesky factor of a row-major SPD matrix.
fn cholesky(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    Some(a)
}

fn forward(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn backward(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

impl GpModel {
    /// The prior: no observations.
    pub fn prior(kernel: KernelConfig) -> Result<Self, GpError> {
        Self::fit(Vec::new(), Vec::new(), kernel)
    }

    /// Conditions on `(xs, ys)`. A failed factorization is retried with σ²
    /// multiplied by 10, at most three times; the model keeps the σ² that worked.
    pub fn fit(xs: Vec<Vec<f64>>, ys: Vec<f64>, mut kernel: KernelConfig) -> Result<Self, GpError> {
        kernel.validate()?;
        if xs.len() != ys.len() {
            return Err(GpError::Shape {
                xs: xs.len(),
                ys: ys.len(),
            });
        }
        let n = xs.len();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = matern52(&xs[i], &xs[j], &kernel);
                gram[i * n + j] = v;
                gram[j * n + i] = v;
            }
        }
        for attempt in 0..=3 {
            if attempt > 0 {
                // zero σ² would stay zero under scaling
                kernel.noise_variance = (kernel.noise_variance * 10.0).max(1e-10 * kernel.amplitude);
            }
            let mut a = gram.clone();
            for i in 0..n {
                a[i * n + i] += kernel.noise_variance;
            }
            if let Some(chol) = cholesky(a, n) {
                let mut alpha = ys.clone();
                forward(&chol, n, &mut alpha);
                backward(&chol, n, &mut alpha);
                return Ok(GpModel {
                    xs,
                    ys,
                    kernel,
                    chol,
                    alpha,
                });
            }
        }
        Err(GpError::IllConditioned {
            noise_variance: kernel.noise_variance,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn xs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn posterior(&self, x: &[f64]) -> Posterior {
        let n = self.xs.len();
        let amp = self.kernel.amplitude;
        if n == 0 {
            return Posterior {
                mean: 0.0,
                variance: amp,
            };
        }
        let mut v: Vec<f64> = self.xs.iter().map(|xi| matern52(x, xi, &self.kernel)).collect();
        let mean = v.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        forward(&self.chol, n, &mut v);
        let reduction: f64 = v.iter().map(|a| a * a).sum();
        Posterior {
            mean,
            variance: (amp - reduction).clamp(0.0, amp),
        }
    }

    /// Refit with one more observation appended.
    pub fn with_observation(&self, x: Vec<f64>, y: f64) -> Result<Self, GpError> {
        let mut xs = self.xs.clone();
        let mut ys = self.ys.clone();
        xs.push(x);
        ys.push(y);
        Self::fit(xs, ys, self.kernel.clone())
    }

    /// Keeps the best (lowest, earliest on ties) observation plus the most
    /// recent `n_max − 1` others, in their original order.
    pub fn capped(&self, n_max: usize) -> Result<Self, GpError> {
        let keep = cap_observations(&self.ys, n_max)?;
        let xs = keep.iter().map(|&i| self.xs[i].clone()).collect();
        let ys = keep.iter().map(|&i| self.ys[i]).collect();
        Self::fit(xs, ys, self.kernel.clone())
    }
}

/// Indices retained by the observation cap.
pub fn cap_observations(ys: &[f64], n_max: usize) -> Result<Vec<usize>, GpError> {
    if n_max < 8 {
        return Err(GpError::BadConfig(format!("observation cap {n_max} is below 8")));
    }
    let n = ys.len();
    if n <= n_max {
        return Ok((0..n).collect());
    }
    let best = (0..n).fold(0, |b, i| if ys[i] < ys[b] { i } else { b });
    let mut keep: Vec<usize> = (0..n).rev().filter(|&i| i != best).take(n_max - 1).collect();
    keep.push(best);
    keep.sort_unstable();
    Ok(keep)
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// E[max(best − Y, 0)] for Y ~ N(mean, sd²): σ(γΦ(γ) + φ(γ)), γ = (best − µ)/σ.
pub fn ei_closed_form(mean: f64, sd: f64, best: f64) -> f64 {
    if !(sd > 0.0) {
        return 0.0;
    }
    let g = (best - mean) / sd;
    (sd * (g * norm_cdf(g) + norm_pdf(g))).max(0.0)
}

pub fn expected_improvement(model: &GpModel, x: &[f64], best: f64) -> f64 {
    let p = model.posterior(x);
    ei_closed_form(p.mean, p.sd(), best)
}

/// Upper confidence bound for minimization, to be maximized: κσ − µ.
pub fn ucb(model: &GpModel, x: &[f64], kappa: f64) -> f64 {
    let p = model.posterior(x);
    kappa * p.sd() - p.mean
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AcquisitionChoice {
    Ei,
    Ucb { kappa: f64 },
}

impl Default for AcquisitionChoice {
    fn default() -> Self {
        AcquisitionChoice::Ei
    }
}

impl AcquisitionChoice {
    pub fn validate(&self) -> Result<(), GpError> {
        match *self {
            AcquisitionChoice::Ucb { kappa } if !(kappa > 0.0) => {
                Err(GpError::BadConfig(format!("UCB needs κ > 0, got {kappa}")))
            }
            _ => Ok(()),
        }
    }

    /// Utility of `x` (larger is better). `best` is the lowest observed value.
    pub fn score(&self, model: &GpModel, x: &[f64], best: f64) -> f64 {
        match *self {
            AcquisitionChoice::Ei => expected_improvement(model, x, best),
            AcquisitionChoice::Ucb { kappa } => ucb(model, x, kappa),
        }
    }
}
