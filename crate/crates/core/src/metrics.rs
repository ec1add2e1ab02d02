//! Evasion metrics over evaluation grids, attack success statistics and
//! parameter/metric correlation analysis.
//!
//! The [`EvaluationGrid`] holds one boolean per (perturbation, input) pair,
//! `true` iff the perturbed input is misclassified. Every rate is derived
//! from it.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::OracleVerdict;
use crate::params::{NoiseKind, ProceduralParams};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty dataset or perturbation set")]
    EmptyDataset,
    #[error("top-{needed} metric needs at least {needed} returned labels, got {got}")]
    InsufficientTopK { needed: usize, got: usize },
    #[error("no input is classified correctly without perturbation")]
    NoCleanCorrectInputs,
    #[error("correlation needs at least 3 rows, got {0}")]
    TooFewRows(usize),
    #[error("grid has {0} unevaluated cells")]
    Incomplete(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("grid csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("grid csv: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One perturbation's outcomes over the dataset; `None` marks cells not yet evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub kind: NoiseKind,
    pub seed: u64,
    pub params: Option<ProceduralParams>,
    pub outcomes: Vec<Option<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid {
    pub item_ids: Vec<String>,
    pub rows: Vec<GridRow>,
}

impl EvaluationGrid {
    /// Empty grid for the given perturbations `(kind, seed, params)` and items.
    pub fn pending(item_ids: Vec<String>, perturbations: &[(NoiseKind, u64, Option<ProceduralParams>)]) -> Self {
        let rows = perturbations
            .iter()
            .map(|&(kind, seed, params)| GridRow {
                kind,
                seed,
                params,
                outcomes: vec![None; item_ids.len()],
            })
            .collect();
        EvaluationGrid { item_ids, rows }
    }

    /// Number of evaluated cells in row-major order before the first gap.
    pub fn cursor(&self) -> usize {
        self.rows.iter().flat_map(|r| &r.outcomes).take_while(|c| c.is_some()).count()
    }

    pub fn cells(&self) -> usize {
        self.rows.len() * self.item_ids.len()
    }

    pub fn is_complete(&self) -> bool {
        self.cursor() == self.cells()
    }

    /// Dense outcome matrix, rows = perturbations.
    pub fn outcomes(&self) -> Result<Vec<Vec<bool>>, MetricsError> {
        let missing = self.cells() - self.cursor();
        if missing > 0 || self.rows.iter().any(|r| r.outcomes.iter().any(Option::is_none)) {
            return Err(MetricsError::Incomplete(missing.max(1)));
        }
        Ok(self.rows.iter().map(|r| r.outcomes.iter().map(|c| c.unwrap()).collect()).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MetricsError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["param_1", "param_2", "param_3", "param_4", "kind", "seed"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.item_ids.iter().cloned());
        out.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = match &row.params {
                Some(p) => p.to_array().iter().map(|v| v.to_string()).collect(),
                None => vec![String::new(); 4],
            };
            rec.push(row.kind.to_string());
            rec.push(row.seed.to_string());
            rec.extend(row.outcomes.iter().map(|c| match c {
                Some(true) => "1".to_string(),
                Some(false) => "0".to_string(),
                None => String::new(),
            }));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, MetricsError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = reader.headers()?.clone();
        if header.len() < 6 || &header[4] != "kind" || &header[5] != "seed" {
            return Err(MetricsError::Parse("header must start with param_1..param_4,kind,seed".into()));
        }
        let item_ids: Vec<String> = header.iter().skip(6).map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let bad = |m: String| MetricsError::Parse(m);
            let kind: NoiseKind = rec[4].parse().map_err(bad)?;
            let seed: u64 = rec[5].parse().map_err(|_| bad(format!("bad seed `{}`", &rec[5])))?;
            let params = if rec[0].is_empty() {
                None
            } else {
                let vals = (0..4)
                    .map(|i| rec[i].parse::<f64>().map_err(|_| bad(format!("bad parameter `{}`", &rec[i]))))
                    .collect::<Result<Vec<_>, _>>()?;
                Some(ProceduralParams::from_slice(kind, &vals).map_err(|e| bad(e.to_string()))?)
            };
            let outcomes = rec
                .iter()
                .skip(6)
                .map(|c| match c {
                    "1" | "true" => Ok(Some(true)),
                    "0" | "false" => Ok(Some(false)),
                    "" => Ok(None),
                    other => Err(bad(format!("bad outcome `{other}`"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            if outcomes.len() != item_ids.len() {
                return Err(MetricsError::Shape(format!("{} outcomes for {} items", outcomes.len(), item_ids.len())));
            }
            rows.push(GridRow {
                kind,
                seed,
                params,
                outcomes,
            });
        }
        Ok(EvaluationGrid { item_ids, rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn fraction(hits: usize, total: usize) -> Result<f64, MetricsError> {
    if total == 0 {
        return Err(MetricsError::EmptyDataset);
    }
    Ok(hits as f64 / total as f64)
}

/// Fraction of inputs evaded by one perturbation.
pub fn universal_evasion_rate(row: &[bool]) -> Result<f64, MetricsError> {
    fraction(row.iter().filter(|&&b| b).count(), row.len())
}

/// Fraction of perturbations that evade one input.
pub fn average_sensitivity(column: &[bool]) -> Result<f64, MetricsError> {
    fraction(column.iter().filter(|&&b| b).count(), column.len())
}

pub fn column(outcomes: &[Vec<bool>], j: usize) -> Vec<bool> {
    outcomes.iter().map(|r| r[j]).collect()
}

/// Fraction of inputs evaded by at least one perturbation.
pub fn input_specific_evasion(outcomes: &[Vec<bool>]) -> Result<f64, MetricsError> {
    let width = outcomes.first().map_or(0, Vec::len);
    if outcomes.is_empty() || width == 0 {
        return Err(MetricsError::EmptyDataset);
    }
    let hit = (0..width).filter(|&j| outcomes.iter().any(|r| r[j])).count();
    fraction(hit, width)
}

/// Fraction of inputs whose true label is absent from the top five of the perturbed prediction.
pub fn top5_evasion(verdicts: &[OracleVerdict], labels: &[usize]) -> Result<f64, MetricsError> {
    const K: usize = 5;
    if verdicts.len() != labels.len() {
        return Err(MetricsError::Shape(format!("{} verdicts for {} labels", verdicts.len(), labels.len())));
    }
    let mut evaded = 0;
    for (v, &label) in verdicts.iter().zip(labels) {
        let got = v.probs.as_ref().map_or(0, Vec::len);
        if got < K {
            return Err(MetricsError::InsufficientTopK { needed: K, got });
        }
        if v.rank_of(label).is_none_or(|r| r >= K) {
            evaded += 1;
        }
    }
    fraction(evaded, verdicts.len())
}

/// What the success statistics need to know about one attacked input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub clean_correct: bool,
    pub success: bool,
    pub queries: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessStats {
    pub success_rate: f64,
    /// Mean queries over successful evasions; `None` when there were none.
    pub average_queries: Option<f64>,
    pub clean_correct: usize,
    pub successes: usize,
}

/// Success rate over clean-correct inputs and mean queries over successful ones.
pub fn success_stats(runs: &[AttackOutcome]) -> Result<SuccessStats, MetricsError> {
    let eligible: Vec<&AttackOutcome> = runs.iter().filter(|r| r.clean_correct).collect();
    if eligible.is_empty() {
        return Err(MetricsError::NoCleanCorrectInputs);
    }
    let wins: Vec<u64> = eligible.iter().filter(|r| r.success).map(|r| r.queries).collect();
    let average_queries = (!wins.is_empty()).then(|| wins.iter().sum::<u64>() as f64 / wins.len() as f64);
    Ok(SuccessStats {
        success_rate: wins.len() as f64 / eligible.len() as f64,
        average_queries,
        clean_correct: eligible.len(),
        successes: wins.len(),
    })
}

/// Pearson correlation; `None` when either column has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Symmetric correlation matrix between columns; undefined entries are `None`.
pub fn correlation_matrix(columns: &[Vec<f64>]) -> Result<Vec<Vec<Option<f64>>>, MetricsError> {
    let rows = columns.first().map_or(0, Vec::len);
    if rows < 3 {
        return Err(MetricsError::TooFewRows(rows));
    }
    if columns.iter().any(|c| c.len() != rows) {
        return Err(MetricsError::Shape("columns differ in length".into()));
    }
    let n = columns.len();
    let mut m = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let r = if i == j {
                pearson(&columns[i], &columns[i]).map(|_| 1.0)
            } else {
                pearson(&columns[i], &columns[j])
            };
            m[i][j] = r;
            m[j][i] = r;
        }
    }
    Ok(m)
}

/// Bin counts over `[0, 1]`; the value 1.0 falls in the last bin.
pub fn histogram(values: &[f64], bin_width: f64) -> Vec<usize> {
    let bins = (1.0 / bin_width).round() as usize;
    let mut counts = vec![0; bins];
    for &v in values {
        let b = ((v.clamp(0.0, 1.0) / bin_width + 1e-9).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

/// Linear-interpolated percentile, `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 100.0) / 100.0 * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}
