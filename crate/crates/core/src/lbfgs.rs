//! Box-projected L-BFGS with central finite-difference gradients and random
//! restarts, run until the query budget is spent.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{BudgetExhausted, QueryLedger};
use crate::search::{Evaluator, Halt, Objective, SearchOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    /// Finite-difference step relative to each coordinate's width.
    pub fd_step: f64,
    pub max_line_search: usize,
    pub convergence_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 8,
            fd_step: 0.05,
            max_line_search: 20,
            convergence_tol: 1e-5,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.memory < 3 {
            return Err(format!("memory {} < 3", self.memory));
        }
        if !(self.fd_step > 0.0 && self.fd_step <= 0.1) {
            return Err(format!("fd_step {} outside (0, 0.1]", self.fd_step));
        }
        if !(self.convergence_tol > 0.0) {
            return Err("convergence_tol must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unit(dim: usize) -> Self {
        Bounds {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| v.clamp(self.lower[i], self.upper[i]))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.lower[i] + rng.random::<f64>() * self.width(i))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum LbfgsError<E> {
    #[error(transparent)]
    BudgetExhausted(#[from] BudgetExhausted),
    #[error("objective failed")]
    Objective(E),
}

fn central_difference<O: Objective + ?Sized>(
    ev: &mut Evaluator<'_, O>,
    x: &[f64],
    bounds: &Bounds,
    fd_step: f64,
) -> Result<Vec<f64>, Halt<O::Error>> {
    if ev.remaining() < 2 * x.len() as u64 {
        return Err(Halt::Budget);
    }
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = fd_step * bounds.width(i);
        let c = x[i].clamp(bounds.lower[i] + h, bounds.upper[i] - h);
        let mut p = x.to_vec();
        p[i] = c + h;
        let fp = ev.eval(&p)?;
        p[i] = c - h;
        let fm = ev.eval(&p)?;
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

/// Central-difference gradient; costs exactly `2·dim` evaluations. Points are
/// shifted inward per coordinate so both probes stay in bounds.
pub fn fd_gradient<O: Objective + ?Sized>(
    objective: &mut O,
    x: &[f64],
    bounds: &Bounds,
    fd_step: f64,
    ledger: &QueryLedger,
) -> Result<Vec<f64>, LbfgsError<O::Error>> {
    let mut ev = Evaluator::new(objective, ledger);
    central_difference(&mut ev, x, bounds, fd_step).map_err(|h| match h {
        Halt::Failed(e) => LbfgsError::Objective(e),
        _ => LbfgsError::BudgetExhausted(BudgetExhausted { limit: ledger.limit() }),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion: −H·g from the stored (s, y) pairs, oldest first.
fn direction(g: &[f64], history: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y) in history.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push((rho, a));
    }
    if let Some((s, y)) = history.last() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y), (rho, a)) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// One descent from `x0` until convergence or line-search failure.
fn descend<O: Objective + ?Sized>(
    ev: &mut Evaluator<'_, O>,
    x0: Vec<f64>,
    bounds: &Bounds,
    cfg: &LbfgsConfig,
) -> Result<(), Halt<O::Error>> {
    const C1: f64 = 1e-4;
    let n = bounds.dim();
    let mut x = x0;
    let mut f = ev.eval(&x)?;
    let mut history: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut last: Option<(Vec<f64>, Vec<f64>)> = None;
    loop {
        let g = central_difference(ev, &x, bounds, cfg.fd_step)?;
        if let Some((s, g_prev)) = last.take() {
            let y: Vec<f64> = g.iter().zip(&g_prev).map(|(a, b)| a - b).collect();
            if dot(&s, &y) > 1e-12 {
                history.push((s, y));
                if history.len() > cfg.memory {
                    history.remove(0);
                }
            }
        }
        let free = |i: usize, gi: f64| {
            !((x[i] <= bounds.lower[i] && gi > 0.0) || (x[i] >= bounds.upper[i] && gi < 0.0))
        };
        let pg = (0..n)
            .map(|i| if free(i, g[i]) { (g[i] * bounds.width(i)).abs() } else { 0.0 })
            .fold(0.0, f64::max);
        if pg < cfg.convergence_tol {
            return Ok(());
        }
        // coordinates pinned at a bound are held fixed for this step
        let pinned: Vec<bool> = (0..n).map(|i| !free(i, g[i])).collect();
        let reduced: Vec<f64> = (0..n).map(|i| if pinned[i] { 0.0 } else { g[i] }).collect();
        let mut d = direction(&reduced, &history);
        for i in 0..n {
            if pinned[i] || !free(i, -d[i]) {
                d[i] = 0.0;
            }
        }
        if dot(&d, &reduced) >= 0.0 {
            history.clear();
            d = reduced.iter().map(|v| -v).collect();
        }
        let mut t = 1.0;
        if history.is_empty() {
            let scale = (0..n).map(|i| d[i].abs() / bounds.width(i)).fold(0.0, f64::max);
            if scale > 0.0 {
                t = (0.2 / scale).min(1.0);
            }
        }
        let mut accepted = None;
        for _ in 0..cfg.max_line_search {
            let xn: Vec<f64> = bounds.project(&x.iter().zip(&d).map(|(a, b)| a + t * b).collect::<Vec<_>>());
            if xn == x {
                break;
            }
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let fnew = ev.eval(&xn)?;
            if fnew <= f + C1 * dot(&g, &step) {
                accepted = Some((xn, fnew, step));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew, step)) = accepted else {
            return Ok(());
        };
        last = Some((step, g));
        x = xn;
        f = fnew;
    }
}

/// Minimizes over `bounds` from `x0`, restarting from uniform random points
/// after each convergence, until the ledger is exhausted or the objective
/// stops. With budget 0 nothing is evaluated and `best_value` is `None`.
pub fn minimize<O, R>(
    objective: &mut O,
    x0: &[f64],
    bounds: &Bounds,
    cfg: &LbfgsConfig,
    ledger: &QueryLedger,
    rng: &mut R,
) -> Result<SearchOutcome, O::Error>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    let mut ev = Evaluator::new(objective, ledger);
    let mut start = bounds.project(x0);
    let end = loop {
        if let Err(h) = descend(&mut ev, start, bounds, cfg) {
            break Err(h);
        }
        start = bounds.sample(rng);
    };
    ev.finish(end, x0)
}
