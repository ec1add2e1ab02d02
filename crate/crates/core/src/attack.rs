//! Universal and input-specific black-box attacks, and bulk evaluation of
//! perturbation sets.
//!
//! Two ledgers are kept apart everywhere: the *budget* ledger counts what the
//! optimizer is charged for (one train-set evaluation in universal mode, one
//! classification in input-specific mode), the *raw* ledger counts every
//! classification actually sent to the oracle.

use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, LabeledDataset, LabeledItem};
use crate::gp::{bayes_minimize, BoConfig};
use crate::image_ops::{apply, Image, PerturbationField};
use crate::lbfgs::{self, Bounds, LbfgsConfig};
use crate::ledger::QueryLedger;
use crate::metrics::{success_stats, AttackOutcome, EvaluationGrid, MetricsError};
use crate::noise::{generate, to_perturbation};
use crate::oracle::{classify, Oracle, OracleError, OracleVerdict};
use crate::params::{NoiseKind, ParamSpace, ProceduralParams};
use crate::search::{random_search, Evaluation, SearchOutcome};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Universal,
    InputSpecific,
}

impl FromStr for AttackMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "universal" => Ok(AttackMode::Universal),
            "input_specific" | "input-specific" | "specific" => Ok(AttackMode::InputSpecific),
            _ => Err(format!("unknown attack mode `{s}` (universal, specific)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bayesopt,
    Lbfgs,
    Random,
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bayesopt" | "bo" => Ok(Method::Bayesopt),
            "lbfgs" => Ok(Method::Lbfgs),
            "random" => Ok(Method::Random),
            _ => Err(format!("unknown method `{s}` (bayesopt, lbfgs, random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub mode: AttackMode,
    pub noise_kind: NoiseKind,
    pub method: Method,
    pub eps: f64,
    pub budget: u64,
    pub seed: u64,
    pub top_k: usize,
}

impl AttackSpec {
    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: String| Err(AttackError::InvalidSpec(m));
        if self.noise_kind == NoiseKind::Random {
            return bad("noise kind must be gabor or perlin".into());
        }
        if self.budget < 1 {
            return bad("budget must be at least 1".into());
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.top_k < 1 {
            return bad("top_k must be at least 1".into());
        }
        Ok(())
    }
}

/// Optimizer settings and parallelism; none of these enter the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOptions {
    pub bo: BoConfig,
    pub lbfgs: LbfgsConfig,
    /// Concurrent classifications; results do not depend on it.
    pub jobs: usize,
}

impl Default for AttackOptions {
    fn default() -> Self {
        AttackOptions {
            bo: BoConfig::default(),
            lbfgs: LbfgsConfig::default(),
            jobs: 1,
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerInputRecord {
    pub id: String,
    pub label: usize,
    pub clean_correct: bool,
    pub success: bool,
    pub queries: u64,
    /// Lowest true-class probability seen (the clean one if not attacked).
    pub best_prob: Option<f64>,
    pub best_params: Option<ProceduralParams>,
    /// True-class probability after each attack query.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub errored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalTracePoint {
    pub params: ProceduralParams,
    pub train_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub schema_version: u32,
    pub spec: AttackSpec,
    /// Echo of the invoking configuration, when run from the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub best_params: Option<ProceduralParams>,
    /// Universal mode: best train-set evasion rate.
    pub train_metric: Option<f64>,
    /// Universal mode: evasion rate of `best_params` on the validation set.
    pub val_metric: Option<f64>,
    pub per_input: Vec<PerInputRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<UniversalTracePoint>,
    pub convergence_query: Option<usize>,
    pub success_rate: Option<f64>,
    pub average_queries: Option<f64>,
    /// Budget units spent (summed over inputs in input-specific mode).
    pub queries_spent: u64,
    /// Every classification sent to the oracle, including clean checks and validation.
    pub raw_classifications: u64,
    pub clean_classifications: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_time_ms: u64,
}

impl AttackReport {
    /// JSON with the timing field zeroed, for replay comparisons.
    pub fn replay_json(&self) -> String {
        let mut r = self.clone();
        r.wall_time_ms = 0;
        serde_json::to_string_pretty(&r).expect("report serializes")
    }
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    /// The oracle failed mid-run; `report` holds everything gathered so far.
    #[error("attack aborted: {source}")]
    Aborted {
        report: Box<AttackReport>,
        source: OracleError,
    },
}

/// Deterministic per-index seed derivation.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Rounds to the 8-bit values a PNG round trip would produce.
pub fn quantize(x: &Image) -> Result<Image, OracleError> {
    let q = x.quantized().iter().map(|&v| v as f64).collect();
    Ok(Image::new(x.side(), q)?)
}

/// The image the oracle sees: `x + s`, clipped and quantized to 8 bits.
pub fn perturbed_input(x: &Image, s: &PerturbationField) -> Result<Image, OracleError> {
    quantize(&apply(x, s)?)
}

pub fn perturbation_for(params: Option<&ProceduralParams>, side: usize, seed: u64, eps: f64) -> PerturbationField {
    to_perturbation(&generate(params, side, seed), eps)
}

fn evaded(v: &OracleVerdict, label: usize) -> bool {
    v.top != label
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool")
}

/// Per-item evasion outcome of one perturbation, one raw classification each.
pub fn evasion_outcomes<O: Oracle + ?Sized>(
    oracle: &O,
    items: &[LabeledItem],
    s: &PerturbationField,
    top_k: usize,
    raw: &QueryLedger,
    pool: &rayon::ThreadPool,
) -> Result<Vec<bool>, OracleError> {
    pool.install(|| {
        items
            .par_iter()
            .map(|it| {
                let v = classify(oracle, &perturbed_input(&it.image, s)?, top_k, raw)?;
                Ok(evaded(&v, it.label))
            })
            .collect()
    })
}

fn check_inputs<O: Oracle + ?Sized>(oracle: &O, sets: &[&LabeledDataset]) -> Result<usize, AttackError> {
    let side = oracle.side().unwrap_or_else(|| sets[0].side());
    for d in sets {
        d.check_side(side)?;
        if let Some(c) = oracle.classes() {
            d.check_labels(c)?;
        }
    }
    Ok(side)
}

fn run_method<Obj>(
    spec: &AttackSpec,
    opts: &AttackOptions,
    space: &ParamSpace,
    objective: &mut Obj,
    ledger: &QueryLedger,
    seed: u64,
) -> Result<SearchOutcome, OracleError>
where
    Obj: FnMut(&[f64]) -> Result<Evaluation, OracleError>,
{
    let box_ = space.search_space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.method {
        Method::Random => random_search(&box_, objective, ledger, &mut rng),
        Method::Bayesopt => bayes_minimize(&box_, objective, ledger, &opts.bo, &mut rng),
        Method::Lbfgs => {
            let x0 = box_.sample(&mut rng);
            lbfgs::minimize(objective, &x0, &Bounds::unit(4), &opts.lbfgs, ledger, &mut rng)
        }
    }
}

/// Optimizes one perturbation's train-set evasion rate, then measures it once on `val`.
pub fn attack_universal<O: Oracle + ?Sized>(
    spec: &AttackSpec,
    opts: &AttackOptions,
    train: &LabeledDataset,
    val: &LabeledDataset,
    oracle: &O,
) -> Result<AttackReport, AttackError> {
    spec.validate()?;
    if spec.mode != AttackMode::Universal {
        return Err(AttackError::InvalidSpec("attack_universal needs mode universal".into()));
    }
    train.check_disjoint(val)?;
    let side = check_inputs(oracle, &[train, val])?;
    let start = Instant::now();
    let space = ParamSpace::new(spec.noise_kind, side);
    let budget = QueryLedger::new(spec.budget);
    let raw = QueryLedger::unlimited();
    let workers = pool(opts.jobs);
    let trace = Mutex::new(Vec::new());

    let mut objective = |x: &[f64]| -> Result<Evaluation, OracleError> {
        let params = space.decode(x);
        let s = perturbation_for(Some(&params), side, spec.seed, spec.eps);
        let hits = evasion_outcomes(oracle, &train.items, &s, spec.top_k, &raw, &workers)?;
        let rate = hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64;
        trace.lock().unwrap().push(UniversalTracePoint {
            params,
            train_rate: rate,
        });
        Ok(Evaluation::value(-rate))
    };
    let result = run_method(spec, opts, &space, &mut objective, &budget, spec.seed);
    let trace = trace.into_inner().unwrap();

    // earliest maximum, matching the optimizers' incumbent rule
    let best = trace
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |b, (i, t)| match b {
            Some((_, r)) if t.train_rate <= r => b,
            _ => Some((i, t.train_rate)),
        });
    let mut report = AttackReport {
        schema_version: REPORT_SCHEMA_VERSION,
        spec: spec.clone(),
        config: None,
        best_params: best.map(|(i, _)| trace[i].params),
        train_metric: best.map(|(_, r)| r),
        val_metric: None,
        per_input: Vec::new(),
        trace,
        convergence_query: best.map(|(i, _)| i + 1),
        success_rate: None,
        average_queries: None,
        queries_spent: budget.spent(),
        raw_classifications: 0,
        clean_classifications: 0,
        error: None,
        wall_time_ms: 0,
    };
    let failure = match result {
        Err(e) => Some(e),
        Ok(_) => report.best_params.and_then(|p| {
            let s = perturbation_for(Some(&p), side, spec.seed, spec.eps);
            match evasion_outcomes(oracle, &val.items, &s, spec.top_k, &raw, &workers) {
                Ok(hits) => {
                    report.val_metric = Some(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64);
                    None
                }
                Err(e) => Some(e),
            }
        }),
    };
    report.raw_classifications = raw.spent();
    report.wall_time_ms = start.elapsed().as_millis() as u64;
    match failure {
        None => Ok(report),
        Some(source) => {
            report.error = Some(source.to_string());
            Err(AttackError::Aborted {
                report: Box::new(report),
                source,
            })
        }
    }
}

fn attack_one<O: Oracle + ?Sized>(
    spec: &AttackSpec,
    opts: &AttackOptions,
    space: &ParamSpace,
    index: usize,
    item: &LabeledItem,
    oracle: &O,
    raw: &QueryLedger,
    clean: &QueryLedger,
) -> PerInputRecord {
    let mut record = PerInputRecord {
        id: item.id.clone(),
        label: item.label,
        clean_correct: false,
        success: false,
        queries: 0,
        best_prob: None,
        best_params: None,
        trace: Vec::new(),
        errored: false,
    };
    let clean_verdict = clean
        .charge()
        .map_err(OracleError::from)
        .and_then(|_| classify(oracle, &quantize(&item.image)?, spec.top_k, raw));
    let clean_verdict = match clean_verdict {
        Ok(v) => v,
        Err(_) => {
            record.errored = true;
            return record;
        }
    };
    record.clean_correct = !evaded(&clean_verdict, item.label);
    record.best_prob = Some(clean_verdict.prob_of(item.label).unwrap_or(0.0));
    if !record.clean_correct {
        return record;
    }
    let budget = QueryLedger::new(spec.budget);
    let mut probs = Vec::new();
    let mut objective = |x: &[f64]| -> Result<Evaluation, OracleError> {
        let params = space.decode(x);
        let s = perturbation_for(Some(&params), space.side, spec.seed, spec.eps);
        let v = classify(oracle, &perturbed_input(&item.image, &s)?, spec.top_k, raw)?;
        // a true class missing from the top-k list is ranked below every listed one
        let p = v.prob_of(item.label).unwrap_or(0.0);
        probs.push(p);
        Ok(if evaded(&v, item.label) {
            Evaluation::stop(p)
        } else {
            Evaluation::value(p)
        })
    };
    let outcome = run_method(spec, opts, space, &mut objective, &budget, split_seed(spec.seed, index as u64));
    record.queries = budget.spent();
    record.trace = probs;
    match outcome {
        Ok(out) => {
            record.success = out.stopped;
            if let Some(v) = out.best_value {
                record.best_prob = Some(v);
                record.best_params = Some(space.decode(&out.best_x));
            }
        }
        Err(_) => record.errored = true,
    }
    record
}

/// Attacks every input separately with a fresh budget, stopping each one at
/// its first misclassification. Inputs misclassified clean are not attacked.
pub fn attack_input_specific<O: Oracle + ?Sized>(
    spec: &AttackSpec,
    opts: &AttackOptions,
    data: &LabeledDataset,
    oracle: &O,
) -> Result<AttackReport, AttackError> {
    spec.validate()?;
    if spec.mode != AttackMode::InputSpecific {
        return Err(AttackError::InvalidSpec("attack_input_specific needs mode input_specific".into()));
    }
    let side = check_inputs(oracle, &[data])?;
    let start = Instant::now();
    let space = ParamSpace::new(spec.noise_kind, side);
    let raw = QueryLedger::unlimited();
    let clean = QueryLedger::unlimited();
    let per_input: Vec<PerInputRecord> = pool(opts.jobs).install(|| {
        data.items
            .par_iter()
            .enumerate()
            .map(|(i, it)| attack_one(spec, opts, &space, i, it, oracle, &raw, &clean))
            .collect()
    });
    let outcomes: Vec<AttackOutcome> = per_input
        .iter()
        .map(|r| AttackOutcome {
            clean_correct: r.clean_correct,
            success: r.success,
            queries: r.queries,
        })
        .collect();
    let stats = success_stats(&outcomes).ok();
    let errors = per_input.iter().filter(|r| r.errored).count();
    Ok(AttackReport {
        schema_version: REPORT_SCHEMA_VERSION,
        spec: spec.clone(),
        config: None,
        best_params: None,
        train_metric: None,
        val_metric: None,
        queries_spent: per_input.iter().map(|r| r.queries).sum(),
        per_input,
        trace: Vec::new(),
        convergence_query: None,
        success_rate: stats.map(|s| s.success_rate),
        average_queries: stats.and_then(|s| s.average_queries),
        raw_classifications: raw.spent(),
        clean_classifications: clean.spent(),
        error: (errors > 0).then(|| format!("{errors} inputs failed with oracle errors")),
        wall_time_ms: start.elapsed().as_millis() as u64,
    })
}

/// `count` seeded perturbations for an evaluation grid: uniform draws from the
/// parameter box, or uniform random noise for [`NoiseKind::Random`].
pub fn perturbation_set(
    kind: NoiseKind,
    side: usize,
    count: usize,
    seed: u64,
) -> Vec<(NoiseKind, u64, Option<ProceduralParams>)> {
    let space = ParamSpace::new(kind, side);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let params = (kind != NoiseKind::Random).then(|| space.decode(&space.search_space().sample(&mut rng)));
            (kind, split_seed(seed, i as u64), params)
        })
        .collect()
}

/// Fills the unevaluated cells of `grid`, resuming at its cursor. On an oracle
/// failure the grid keeps every cell evaluated so far.
pub fn evaluate_perturbation_set<O: Oracle + ?Sized>(
    grid: &mut EvaluationGrid,
    dataset: &LabeledDataset,
    oracle: &O,
    eps: f64,
    top_k: usize,
    ledger: &QueryLedger,
) -> Result<(), AttackError> {
    let side = check_inputs(oracle, &[dataset])?;
    if grid.item_ids.len() != dataset.len() || grid.item_ids.iter().zip(&dataset.items).any(|(a, b)| *a != b.id) {
        return Err(MetricsError::Shape("grid columns do not match the dataset".into()).into());
    }
    let width = dataset.len();
    let cursor = grid.cursor();
    for r in cursor / width..grid.rows.len() {
        let row = &grid.rows[r];
        let s = perturbation_for(row.params.as_ref(), side, row.seed, eps);
        for j in 0..width {
            if grid.rows[r].outcomes[j].is_some() {
                continue;
            }
            let it = &dataset.items[j];
            let v = classify(oracle, &perturbed_input(&it.image, &s)?, top_k, ledger)?;
            grid.rows[r].outcomes[j] = Some(evaded(&v, it.label));
        }
    }
    Ok(())
}
