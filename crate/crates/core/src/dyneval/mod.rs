//! Model error on raw versus augmented batches, and the resulting shift
//! improvement `delta = d_raw - d_aug`.

mod mlp;
mod tvd;

pub use mlp::{fit_mlp, regression_data, MlpConfig, MlpDynamics};
pub use tvd::{tvd_distance, ExactSum};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::density::fit_categorical;
use crate::envs::{Env, GridEnv};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tag};
use crate::space::{ContinuousBatch, DiscreteBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    Tvd,
    Mse,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Tvd => "TVD",
            Metric::Mse => "MSE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub d_raw: f64,
    pub d_aug: f64,
    pub delta: f64,
    pub metric: Metric,
    /// Transitions in the evaluation set; for TVD, the number of `(s, a)` pairs.
    pub eval_size: usize,
}

impl ShiftReport {
    pub fn new(d_raw: f64, d_aug: f64, metric: Metric, eval_size: usize) -> Self {
        ShiftReport {
            d_raw,
            d_aug,
            delta: d_raw - d_aug,
            metric,
            eval_size,
        }
    }
}

pub fn delta_discrete(b: &DiscreteBatch, b_aug: &DiscreteBatch, env: &GridEnv) -> Result<ShiftReport> {
    let raw = fit_categorical(b)?;
    let aug = fit_categorical(b_aug)?;
    Ok(ShiftReport::new(
        tvd_distance(env, &raw)?,
        tvd_distance(env, &aug)?,
        Metric::Tvd,
        raw.total_pairs(),
    ))
}

/// Fresh random-policy transitions used to score dynamics models.
pub fn evaluation_batch(env: &Env, eval_n: usize, seed: u64) -> Result<ContinuousBatch> {
    env.collect_continuous(eval_n, derive_seed(seed, tag::EVAL))
}

/// Fits one regressor per batch with the same seed and scores both on
/// `eval_n` fresh transitions.
pub fn delta_continuous(
    b: &ContinuousBatch,
    b_aug: &ContinuousBatch,
    env: &Env,
    eval_n: usize,
    seed: u64,
    config: MlpConfig,
) -> Result<ShiftReport> {
    let eval = evaluation_batch(env, eval_n, seed)?;
    delta_continuous_on(b, b_aug, &eval, seed, config)
}

/// As [`delta_continuous`] with a caller-supplied evaluation set.
pub fn delta_continuous_on(
    b: &ContinuousBatch,
    b_aug: &ContinuousBatch,
    eval: &ContinuousBatch,
    seed: u64,
    config: MlpConfig,
) -> Result<ShiftReport> {
    if b.meta != b_aug.meta {
        return Err(Error::BatchType("raw and augmented batches differ in space".into()));
    }
    let raw = fit_mlp(b, config, seed)?;
    let aug = fit_mlp(b_aug, config, seed)?;
    Ok(ShiftReport::new(raw.mse(eval)?, aug.mse(eval)?, Metric::Mse, eval.len()))
}
