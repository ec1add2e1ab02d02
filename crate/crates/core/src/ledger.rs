//! Query budget accounting shared by oracles and optimizers.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("query budget exhausted ({limit} spent)")]
pub struct BudgetExhausted {
    pub limit: u64,
}

/// Counts spent queries against a hard limit. Safe to share between threads.
#[derive(Debug)]
pub struct QueryLedger {
    spent: AtomicU64,
    limit: u64,
}

impl QueryLedger {
    pub fn new(limit: u64) -> Self {
        QueryLedger {
            spent: AtomicU64::new(0),
            limit,
        }
    }

    pub fn unlimited() -> Self {
        Self::new(u64::MAX)
    }

    pub fn spent(&self) -> u64 {
        self.spent.load(Ordering::SeqCst)
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.spent()
    }

    /// Reserves one query. Leaves `spent` untouched when the limit is reached.
    pub fn charge(&self) -> Result<(), BudgetExhausted> {
        self.spent
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |s| {
                (s < self.limit).then_some(s + 1)
            })
            .map(|_| ())
            .map_err(|_| BudgetExhausted { limit: self.limit })
    }
}

impl Clone for QueryLedger {
    fn clone(&self) -> Self {
        QueryLedger {
            spent: AtomicU64::new(self.spent()),
            limit: self.limit,
        }
    }
}
