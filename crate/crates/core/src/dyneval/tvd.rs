//! Summed total-variation distance between the exact grid dynamics and a
//! fitted categorical model.
//!
//! For a seen pair with true successor `s*` the per-pair distance is
//! `1 - p(s*)`; for an unseen pair (uniform estimate) it is `1 - 1/|S|`.
//! Terms are added with a correctly rounded sum, so the result does not depend
//! on the order in which pairs are visited.

use crate::density::CategoricalModel;
use crate::envs::GridEnv;
use crate::error::{Error, Result};
use crate::space::GridAction;

/// Correctly rounded floating-point summation (Shewchuk's partials).
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let mut x = x;
        let mut kept = 0;
        for i in 0..self.partials.len() {
            let mut y = self.partials[i];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    /// Adds `x * k` exactly.
    pub fn add_product(&mut self, x: f64, k: f64) {
        let hi = x * k;
        let lo = x.mul_add(k, -hi);
        self.add(hi);
        self.add(lo);
    }

    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(&last) = p.last() else {
            return 0.0;
        };
        let mut n = p.len() - 1;
        let mut hi = last;
        let mut lo = 0.0;
        while n > 0 {
            n -= 1;
            let x = hi;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // round-half-even correction when the remaining partials share the sign of lo
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

/// `(1/2) * sum over (s, a, s') of |T - T_hat|` against the simulator.
pub fn tvd_distance(env: &GridEnv, m: &CategoricalModel) -> Result<f64> {
    if m.state_count() != env.meta.state_count() {
        return Err(Error::Dimension {
            expected: env.meta.state_count(),
            got: m.state_count(),
        });
    }
    let n_states = env.meta.state_count() as f64;
    let mut acc = ExactSum::new();
    let mut seen = 0usize;
    for (&(s, a), succ) in m.iter_seen() {
        let total: u64 = succ.values().sum();
        let cell = env.meta.decode_state(s)?;
        let action = GridAction::from_index(a)?;
        let target = env.meta.encode_state(env.step(cell, action))?;
        let hit = succ.get(&target).copied().unwrap_or(0);
        acc.add((total - hit) as f64 / total as f64);
        seen += 1;
    }
    let unseen = m.total_pairs() - seen;
    acc.add_product((n_states - 1.0) / n_states, unseen as f64);
    Ok(acc.value())
}
