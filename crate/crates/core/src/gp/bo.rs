//! Sequential Bayesian optimization over the unit search box.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AcquisitionChoice, GpModel, KernelConfig};
use crate::ledger::QueryLedger;
use crate::search::{Dimension, Evaluator, Objective, SearchOutcome, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    pub acquisition: AcquisitionChoice,
    /// Length scale in the unit box, shared by all dimensions.
    pub length_scale: f64,
    pub noise_variance: f64,
    /// Random draws before the surrogate takes over.
    pub initial_points: usize,
    pub candidates: usize,
    pub refine: usize,
    pub max_observations: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            acquisition: AcquisitionChoice::Ei,
            length_scale: 0.2,
            noise_variance: 1e-4,
            initial_points: 8,
            candidates: 1024,
            refine: 8,
            max_observations: 60,
        }
    }
}

impl BoConfig {
    pub fn kernel(&self, dim: usize) -> KernelConfig {
        KernelConfig {
            length_scale: vec![self.length_scale; dim],
            amplitude: 1.0,
            noise_variance: self.noise_variance,
        }
    }
}

/// The seeded candidate list, already on the discrete grid.
pub fn candidates<R: Rng + ?Sized>(space: &SearchSpace, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| space.sample(rng)).collect()
}

const REFINE_STEPS: [f64; 2] = [0.04, 0.01];
const REFINE_SWEEPS: usize = 4;

/// Coordinate search from `x`, accepting strict improvements only.
fn refine(space: &SearchSpace, mut x: Vec<f64>, mut score: f64, f: &dyn Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    for step in REFINE_STEPS {
        for _ in 0..REFINE_SWEEPS {
            let mut moved = false;
            for (d, dim) in space.dims().iter().enumerate() {
                let delta = match *dim {
                    Dimension::Continuous => step,
                    Dimension::Discrete { levels } if levels > 1 => 1.0 / (levels - 1) as f64,
                    Dimension::Discrete { .. } => continue,
                };
                for sign in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[d] += sign * delta;
                    let y = space.snap(&y);
                    if y == x {
                        continue;
                    }
                    let s = f(&y);
                    if s > score {
                        x = y;
                        score = s;
                        moved = true;
                    }
                }
            }
            if !moved {
                break;
            }
        }
    }
    (x, score)
}

/// Maximizes the acquisition over `cfg.candidates` seeded points, then
/// refines the best `cfg.refine` of them. Ties go to the earlier candidate.
pub fn propose_next<R: Rng + ?Sized>(
    model: &GpModel,
    acquisition: &AcquisitionChoice,
    space: &SearchSpace,
    best: f64,
    cfg: &BoConfig,
    rng: &mut R,
) -> Vec<f64> {
    let cands = candidates(space, cfg.candidates.max(1), rng);
    let f = |x: &[f64]| acquisition.score(model, x, best);
    let scores: Vec<f64> = cands.iter().map(|c| f(c)).collect();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut winner = (cands[order[0]].clone(), scores[order[0]]);
    for &i in order.iter().take(cfg.refine) {
        let (x, s) = refine(space, cands[i].clone(), scores[i], &f);
        if s > winner.1 {
            winner = (x, s);
        }
    }
    winner.0
}

/// Minimizes `objective` with a GP surrogate until the ledger is spent or the
/// objective asks to stop. Values are standardized before fitting.
pub fn bayes_minimize<O, R>(
    space: &SearchSpace,
    objective: &mut O,
    ledger: &QueryLedger,
    cfg: &BoConfig,
    rng: &mut R,
) -> Result<SearchOutcome, O::Error>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    let kernel = cfg.kernel(space.dim());
    let mut ev = Evaluator::new(objective, ledger);
    let end = loop {
        let trace = ev.trace();
        let x = if trace.len() < cfg.initial_points.max(1) {
            space.sample(rng)
        } else {
            let n = trace.len() as f64;
            let mean = trace.iter().map(|t| t.value).sum::<f64>() / n;
            let var = trace.iter().map(|t| (t.value - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt().max(1e-6);
            let ys: Vec<f64> = trace.iter().map(|t| (t.value - mean) / sd).collect();
            let keep = super::cap_observations(&ys, cfg.max_observations.max(8)).expect("cap ≥ 8");
            let xs = keep.iter().map(|&i| trace[i].x.clone()).collect();
            let kept = keep.iter().map(|&i| ys[i]).collect();
            let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
            match GpModel::fit(xs, kept, kernel.clone()) {
                Ok(model) => propose_next(&model, &cfg.acquisition, space, best, cfg, rng),
                Err(_) => space.sample(rng),
            }
        };
        if let Err(h) = ev.eval(&x) {
            break Err(h);
        }
    };
    let origin = vec![0.0; space.dim()];
    ev.finish(end, &origin)
}
