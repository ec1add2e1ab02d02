//! Procedural-noise adversarial perturbations and query-efficient black-box attacks.
//!
//! Gabor and Perlin noise generators with four parameters each are searched by
//! Bayesian optimization, L-BFGS or random search against any classifier
//! reachable through the [`oracle`] protocol, under strict query accounting.

pub mod attack;
pub mod dataset;
pub mod gp;
pub mod image_ops;
pub mod lbfgs;
pub mod ledger;
pub mod metrics;
pub mod noise;
pub mod oracle;
pub mod params;
pub mod search;

pub use attack::{AttackMode, AttackReport, AttackSpec, Method};
pub use image_ops::{Image, PerturbationField};
pub use ledger::QueryLedger;
pub use params::{NoiseKind, ParamSpace, ProceduralParams};
