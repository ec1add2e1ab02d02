//! Shared machinery for the black-box optimizers: the unit search box,
//! the objective contract, budget-charged evaluation and traces.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ledger::QueryLedger;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Continuous,
    /// `levels` evenly spaced values covering `[0, 1]`.
    Discrete { levels: usize },
}

/// Product of unit intervals, some of them discretized.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Self {
        SearchSpace { dims }
    }

    pub fn continuous(n: usize) -> Self {
        SearchSpace {
            dims: vec![Dimension::Continuous; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    /// Uniform draw; discrete coordinates are uniform over their levels.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.dims
            .iter()
            .map(|d| match *d {
                Dimension::Continuous => rng.random::<f64>(),
                Dimension::Discrete { levels } if levels > 1 => {
                    rng.random_range(0..levels) as f64 / (levels - 1) as f64
                }
                Dimension::Discrete { .. } => 0.0,
            })
            .collect()
    }

    /// Clamps into the box and rounds discrete coordinates onto their grid.
    pub fn snap(&self, x: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(x)
            .map(|(d, &v)| {
                let v = v.clamp(0.0, 1.0);
                match *d {
                    Dimension::Continuous => v,
                    Dimension::Discrete { levels } if levels > 1 => {
                        let n = (levels - 1) as f64;
                        (v * n).round() / n
                    }
                    Dimension::Discrete { .. } => 0.0,
                }
            })
            .collect()
    }
}

/// One objective value; `stop` ends the search early (e.g. an input was evaded).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub stop: bool,
}

impl Evaluation {
    pub fn value(value: f64) -> Self {
        Evaluation { value, stop: false }
    }

    pub fn stop(value: f64) -> Self {
        Evaluation { value, stop: true }
    }
}

/// A black-box function to minimize.
pub trait Objective {
    type Error;

    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation, Self::Error>;
}

impl<F, E> Objective for F
where
    F: FnMut(&[f64]) -> Result<Evaluation, E>,
{
    type Error = E;

    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation, E> {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub x: Vec<f64>,
    pub value: f64,
    /// Best value seen up to and including this evaluation.
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best_x: Vec<f64>,
    /// `None` when nothing was evaluated.
    pub best_value: Option<f64>,
    pub trace: Vec<TraceEntry>,
    pub stopped: bool,
}

impl SearchOutcome {
    /// 1-based evaluation index at which the final incumbent was found.
    pub fn convergence_index(&self) -> Option<usize> {
        let best = self.best_value?;
        self.trace.iter().position(|t| t.value == best).map(|i| i + 1)
    }

    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }
}

pub(crate) enum Halt<E> {
    Budget,
    Stopped,
    Failed(E),
}

/// Wraps an objective so that every call is charged, traced and tracked.
pub(crate) struct Evaluator<'a, O: Objective + ?Sized> {
    objective: &'a mut O,
    ledger: &'a QueryLedger,
    trace: Vec<TraceEntry>,
    best_x: Option<Vec<f64>>,
    best_value: Option<f64>,
    stopped: bool,
}

impl<'a, O: Objective + ?Sized> Evaluator<'a, O> {
    pub fn new(objective: &'a mut O, ledger: &'a QueryLedger) -> Self {
        Evaluator {
            objective,
            ledger,
            trace: Vec::new(),
            best_x: None,
            best_value: None,
            stopped: false,
        }
    }

    pub fn eval(&mut self, x: &[f64]) -> Result<f64, Halt<O::Error>> {
        if self.stopped {
            return Err(Halt::Stopped);
        }
        self.ledger.charge().map_err(|_| Halt::Budget)?;
        let e = self.objective.evaluate(x).map_err(Halt::Failed)?;
        // strict: ties keep the earliest point
        if self.best_value.is_none_or(|b| e.value < b) {
            self.best_value = Some(e.value);
            self.best_x = Some(x.to_vec());
        }
        self.trace.push(TraceEntry {
            x: x.to_vec(),
            value: e.value,
            incumbent: self.best_value.unwrap_or(e.value),
        });
        if e.stop {
            self.stopped = true;
        }
        Ok(e.value)
    }

    pub fn remaining(&self) -> u64 {
        self.ledger.remaining()
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    /// Converts the run's end state into an outcome, propagating only real failures.
    pub fn finish(
        self,
        end: Result<(), Halt<O::Error>>,
        fallback_x: &[f64],
    ) -> Result<SearchOutcome, O::Error> {
        if let Err(Halt::Failed(e)) = end {
            return Err(e);
        }
        Ok(SearchOutcome {
            best_x: self.best_x.unwrap_or_else(|| fallback_x.to_vec()),
            best_value: self.best_value,
            trace: self.trace,
            stopped: self.stopped,
        })
    }
}

/// Uniform i.i.d. draws over the box until the ledger runs out or the objective stops.
pub fn random_search<O, R>(
    space: &SearchSpace,
    objective: &mut O,
    ledger: &QueryLedger,
    rng: &mut R,
) -> Result<SearchOutcome, O::Error>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    let mut ev = Evaluator::new(objective, ledger);
    let end = loop {
        let x = space.sample(rng);
        if let Err(h) = ev.eval(&x) {
            break Err(h);
        }
    };
    let origin = vec![0.0; space.dim()];
    ev.finish(end, &origin)
}
