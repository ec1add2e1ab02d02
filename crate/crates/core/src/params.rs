//! Procedural noise parameters and the bounded search box they live in.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search::{Dimension, SearchSpace};

/// Smallest value the optimizers draw for a positive pixel-scale parameter.
pub const MIN_POSITIVE: f64 = 1.0;
pub const MAX_ISOTROPY: u32 = 12;
pub const MAX_OCTAVES: u32 = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} = {value} violates bound {bound}")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        bound: String,
    },
    #[error("expected 4 parameter values, got {0}")]
    Arity(usize),
}

/// Which generator produced a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gabor,
    Perlin,
    Random,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Gabor => "gabor",
            NoiseKind::Perlin => "perlin",
            NoiseKind::Random => "random",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gabor" => Ok(NoiseKind::Gabor),
            "perlin" => Ok(NoiseKind::Perlin),
            "random" => Ok(NoiseKind::Random),
            other => Err(format!("unknown noise kind `{other}`")),
        }
    }
}

/// Gabor noise parameters. `sigma` and `lambda` are in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborParams {
    pub sigma: f64,
    pub lambda: f64,
    pub omega: f64,
    pub xi: u32,
}

/// Perlin noise parameters: wavelengths in pixels, sine colour-map frequency and octave count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerlinParams {
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub phi_sine: f64,
    pub octaves: u32,
}

fn check_positive(name: &'static str, value: f64, side: usize) -> Result<(), ParamError> {
    if value > 0.0 && value <= side as f64 {
        Ok(())
    } else {
        Err(ParamError::OutOfBounds {
            name,
            value,
            bound: format!("{name} ∈ (0,{side}]"),
        })
    }
}

fn check_discrete(name: &'static str, value: u32, max: u32) -> Result<(), ParamError> {
    if (1..=max).contains(&value) {
        Ok(())
    } else {
        Err(ParamError::OutOfBounds {
            name,
            value: value as f64,
            bound: format!("{name} ∈ [1,{max}]"),
        })
    }
}

impl GaborParams {
    pub fn validate(&self, side: usize) -> Result<(), ParamError> {
        check_positive("sigma", self.sigma, side)?;
        check_positive("lambda", self.lambda, side)?;
        if !(0.0..=TAU).contains(&self.omega) {
            return Err(ParamError::OutOfBounds {
                name: "omega",
                value: self.omega,
                bound: "omega ∈ [0,2π]".into(),
            });
        }
        check_discrete("xi", self.xi, MAX_ISOTROPY)
    }
}

impl PerlinParams {
    pub fn validate(&self, side: usize) -> Result<(), ParamError> {
        check_positive("lambda_x", self.lambda_x, side)?;
        check_positive("lambda_y", self.lambda_y, side)?;
        check_positive("phi_sine", self.phi_sine, side)?;
        check_discrete("octaves", self.octaves, MAX_OCTAVES)
    }
}

/// Parameters of either procedural generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProceduralParams {
    Gabor(GaborParams),
    Perlin(PerlinParams),
}

impl ProceduralParams {
    pub fn kind(&self) -> NoiseKind {
        match self {
            ProceduralParams::Gabor(_) => NoiseKind::Gabor,
            ProceduralParams::Perlin(_) => NoiseKind::Perlin,
        }
    }

    pub fn validate(&self, side: usize) -> Result<(), ParamError> {
        match self {
            ProceduralParams::Gabor(p) => p.validate(side),
            ProceduralParams::Perlin(p) => p.validate(side),
        }
    }

    /// Flat `[param_1, .., param_4]` view in declaration order.
    pub fn to_array(&self) -> [f64; 4] {
        match *self {
            ProceduralParams::Gabor(p) => [p.sigma, p.lambda, p.omega, p.xi as f64],
            ProceduralParams::Perlin(p) => [p.lambda_x, p.lambda_y, p.phi_sine, p.octaves as f64],
        }
    }

    /// Inverse of [`to_array`](Self::to_array); discrete entries are rounded.
    pub fn from_slice(kind: NoiseKind, values: &[f64]) -> Result<Self, ParamError> {
        if values.len() != 4 {
            return Err(ParamError::Arity(values.len()));
        }
        let round = |v: f64| v.round().max(0.0) as u32;
        match kind {
            NoiseKind::Gabor => Ok(ProceduralParams::Gabor(GaborParams {
                sigma: values[0],
                lambda: values[1],
                omega: values[2],
                xi: round(values[3]),
            })),
            NoiseKind::Perlin => Ok(ProceduralParams::Perlin(PerlinParams {
                lambda_x: values[0],
                lambda_y: values[1],
                phi_sine: values[2],
                octaves: round(values[3]),
            })),
            NoiseKind::Random => Err(ParamError::OutOfBounds {
                name: "kind",
                value: 0.0,
                bound: "kind ∈ {gabor, perlin}".into(),
            }),
        }
    }

    pub fn names(kind: NoiseKind) -> [&'static str; 4] {
        match kind {
            NoiseKind::Gabor => ["sigma", "lambda", "omega", "xi"],
            _ => ["lambda_x", "lambda_y", "phi_sine", "octaves"],
        }
    }
}

/// The bounded 4-parameter box of one procedural generator at a given image side.
///
/// Optimizers work in the unit cube; `decode` maps a unit point onto concrete
/// parameters, rounding the discrete coordinate to the nearest valid integer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    pub kind: NoiseKind,
    pub side: usize,
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl ParamSpace {
    pub fn new(kind: NoiseKind, side: usize) -> Self {
        let d = side as f64;
        match kind {
            NoiseKind::Gabor => ParamSpace {
                kind,
                side,
                lower: [MIN_POSITIVE, MIN_POSITIVE, 0.0, 1.0],
                upper: [d, d, TAU, MAX_ISOTROPY as f64],
            },
            NoiseKind::Perlin | NoiseKind::Random => ParamSpace {
                kind: NoiseKind::Perlin,
                side,
                lower: [MIN_POSITIVE, MIN_POSITIVE, MIN_POSITIVE, 1.0],
                upper: [d, d, d, MAX_OCTAVES as f64],
            },
        }
    }

    pub fn search_space(&self) -> SearchSpace {
        let levels = (self.upper[3] - self.lower[3]).round() as usize + 1;
        SearchSpace::new(vec![
            Dimension::Continuous,
            Dimension::Continuous,
            Dimension::Continuous,
            Dimension::Discrete { levels },
        ])
    }

    pub fn decode(&self, unit: &[f64]) -> ProceduralParams {
        let mut values = [0.0; 4];
        for (i, v) in values.iter_mut().enumerate() {
            let u = unit[i].clamp(0.0, 1.0);
            *v = self.lower[i] + u * (self.upper[i] - self.lower[i]);
        }
        values[3] = values[3].round().clamp(self.lower[3], self.upper[3]);
        ProceduralParams::from_slice(self.kind, &values).expect("four values")
    }

    pub fn encode(&self, params: &ProceduralParams) -> Vec<f64> {
        params
            .to_array()
            .iter()
            .enumerate()
            .map(|(i, v)| ((v - self.lower[i]) / (self.upper[i] - self.lower[i])).clamp(0.0, 1.0))
            .collect()
    }
}
