//! Black-box classifier access.
//!
//! An [`Oracle`] answers image queries with a top-k label list. All attack
//! code goes through [`classify`], which charges a [`QueryLedger`] before the
//! oracle is contacted, so budgets hold no matter which transport is used.

mod http;
mod subprocess;
mod toy;
pub mod wire;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::http::{HealthInfo, HttpOracle};
pub use self::subprocess::SubprocessOracle;
pub use self::toy::{ToyOracle, ToyOracleSpec, BANK_SIZE};
use crate::image_ops::{median_filter, Image, ImageError};
pub use crate::ledger::{BudgetExhausted, QueryLedger};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    BudgetExhausted(#[from] BudgetExhausted),
    #[error("oracle transport: {0}")]
    Transport(String),
    #[error("invalid oracle configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProb {
    pub class: usize,
    pub prob: f64,
}

/// Classifier response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub top: usize,
    /// Top-k labels by non-increasing probability, when the oracle exposes them.
    pub probs: Option<Vec<ClassProb>>,
    #[serde(skip)]
    pub latency: Option<Duration>,
}

impl OracleVerdict {
    pub fn from_labels(labels: Vec<ClassProb>) -> Result<Self, OracleError> {
        let first = labels.first().ok_or_else(|| OracleError::Transport("empty label list".into()))?;
        let top = first.class;
        let v = OracleVerdict {
            top,
            probs: Some(labels),
            latency: None,
        };
        v.check()?;
        Ok(v)
    }

    /// Probability of `class`, if it is among the returned labels.
    pub fn prob_of(&self, class: usize) -> Option<f64> {
        self.probs.as_ref()?.iter().find(|c| c.class == class).map(|c| c.prob)
    }

    /// 0-based rank of `class` in the returned labels.
    pub fn rank_of(&self, class: usize) -> Option<usize> {
        self.probs.as_ref()?.iter().position(|c| c.class == class)
    }

    /// Probabilities in `[0, 1]`, non-increasing, summing to at most `1 + 1e-6`.
    pub fn check(&self) -> Result<(), OracleError> {
        let Some(labels) = &self.probs else { return Ok(()) };
        let bad = |m: &str| Err(OracleError::Transport(format!("malformed verdict: {m}")));
        if labels.iter().any(|c| !(0.0..=1.0).contains(&c.prob)) {
            return bad("probability outside [0,1]");
        }
        if labels.windows(2).any(|w| w[1].prob > w[0].prob) {
            return bad("probabilities not sorted");
        }
        if labels.iter().map(|c| c.prob).sum::<f64>() > 1.0 + 1e-6 {
            return bad("probabilities sum above 1");
        }
        if labels.first().is_some_and(|c| c.class != self.top) {
            return bad("top label differs from first entry");
        }
        Ok(())
    }
}

/// A queryable classifier. Implementations must be shareable across threads.
pub trait Oracle: Send + Sync {
    /// Raw query; callers should normally go through [`classify`].
    fn query(&self, image: &Image, top_k: usize) -> Result<OracleVerdict, OracleError>;

    /// Expected image side, when known.
    fn side(&self) -> Option<usize> {
        None
    }

    fn classes(&self) -> Option<usize> {
        None
    }
}

impl<O: Oracle + ?Sized> Oracle for Arc<O> {
    fn query(&self, image: &Image, top_k: usize) -> Result<OracleVerdict, OracleError> {
        (**self).query(image, top_k)
    }
    fn side(&self) -> Option<usize> {
        (**self).side()
    }
    fn classes(&self) -> Option<usize> {
        (**self).classes()
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn query(&self, image: &Image, top_k: usize) -> Result<OracleVerdict, OracleError> {
        (**self).query(image, top_k)
    }
    fn side(&self) -> Option<usize> {
        (**self).side()
    }
    fn classes(&self) -> Option<usize> {
        (**self).classes()
    }
}

/// Charges one query to `ledger`, then asks the oracle.
pub fn classify<O: Oracle + ?Sized>(
    oracle: &O,
    image: &Image,
    top_k: usize,
    ledger: &QueryLedger,
) -> Result<OracleVerdict, OracleError> {
    ledger.charge()?;
    oracle.query(image, top_k)
}

/// Classifies the median-filtered image instead of the raw one.
#[derive(Debug, Clone)]
pub struct MedianDefence<O> {
    inner: O,
    window: usize,
}

impl<O> MedianDefence<O> {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: Oracle> Oracle for MedianDefence<O> {
    fn query(&self, image: &Image, top_k: usize) -> Result<OracleVerdict, OracleError> {
        let filtered = median_filter(image, self.window)?;
        self.inner.query(&filtered, top_k)
    }

    fn side(&self) -> Option<usize> {
        self.inner.side()
    }

    fn classes(&self) -> Option<usize> {
        self.inner.classes()
    }
}

pub fn with_median_defence<O: Oracle>(oracle: O, window: usize) -> Result<MedianDefence<O>, OracleError> {
    if window < 3 || window % 2 == 0 || oracle.side().is_some_and(|s| window > s) {
        return Err(OracleError::Config(format!("median window {window} must be odd, ≥ 3 and ≤ the image side")));
    }
    Ok(MedianDefence { inner: oracle, window })
}

/// Builds an oracle from a URI:
/// `toy://?seed=S&side=D&classes=C`, `http://host:port[/prefix]` or `subprocess:<command line>`.
pub fn from_uri(uri: &str, token: Option<String>) -> Result<Box<dyn Oracle>, OracleError> {
    if let Some(cmd) = uri.strip_prefix("subprocess:") {
        return Ok(Box::new(SubprocessOracle::spawn(cmd)?));
    }
    if uri.starts_with("toy:") {
        return Ok(Box::new(ToyOracle::new(ToyOracleSpec::from_uri(uri)?)?));
    }
    if uri.starts_with("http://") || uri.starts_with("https://") {
        return Ok(Box::new(HttpOracle::new(uri, token)));
    }
    Err(OracleError::Config(format!("unsupported oracle URI `{uri}`")))
}
