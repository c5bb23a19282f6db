use std::collections::BTreeMap;

use crate::error::Result;
use crate::space::{Cell, DiscreteBatch, DiscreteSpaceMeta, GridAction};

/// Maximum-likelihood categorical transition model over grid states.
///
/// Seen `(s, a)` pairs use observed frequencies; unseen pairs fall back to
/// the uniform distribution over all `|S|` states.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalModel {
    pub meta: DiscreteSpaceMeta,
    /// `(state index, action id) -> (next state index -> count)`
    counts: BTreeMap<(usize, usize), BTreeMap<usize, u64>>,
}

impl CategoricalModel {
    pub fn fit(b: &DiscreteBatch) -> Result<Self> {
        let meta = b.meta;
        let mut counts: BTreeMap<(usize, usize), BTreeMap<usize, u64>> = BTreeMap::new();
        for t in b.iter() {
            let key = (meta.encode_state(t.s)?, t.a.index());
            *counts
                .entry(key)
                .or_default()
                .entry(meta.encode_state(t.s_next)?)
                .or_insert(0) += 1;
        }
        Ok(CategoricalModel { meta, counts })
    }

    pub fn state_count(&self) -> usize {
        self.meta.state_count()
    }

    /// Number of distinct `(s, a)` pairs with at least one observation.
    pub fn seen_pairs(&self) -> usize {
        self.counts.len()
    }

    pub fn total_pairs(&self) -> usize {
        self.state_count() * self.meta.action_count
    }

    /// Successor counts of one seen pair, or `None` when unseen.
    pub fn successors(&self, s: usize, a: usize) -> Option<&BTreeMap<usize, u64>> {
        self.counts.get(&(s, a))
    }

    /// All seen pairs with their successor counts, in index order.
    pub fn iter_seen(&self) -> impl Iterator<Item = (&(usize, usize), &BTreeMap<usize, u64>)> {
        self.counts.iter()
    }

    /// `T^(s' | s, a)` by state/action index.
    pub fn prob_idx(&self, s: usize, a: usize, s_next: usize) -> f64 {
        match self.counts.get(&(s, a)) {
            Some(row) => {
                let total: u64 = row.values().sum();
                row.get(&s_next).copied().unwrap_or(0) as f64 / total as f64
            }
            None => 1.0 / self.state_count() as f64,
        }
    }

    pub fn prob(&self, s: Cell, a: GridAction, s_next: Cell) -> Result<f64> {
        Ok(self.prob_idx(
            self.meta.encode_state(s)?,
            a.index(),
            self.meta.encode_state(s_next)?,
        ))
    }
}

/// Fits the frequency model on a grid batch.
pub fn fit_categorical(b: &DiscreteBatch) -> Result<CategoricalModel> {
    CategoricalModel::fit(b)
}
