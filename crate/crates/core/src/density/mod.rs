//! Transition estimators: categorical frequencies for grids, KDE and
//! coupling flows for continuous joint `(s, a, s')` vectors, and the quantile
//! threshold used to decide whether a point is in-distribution.

mod categorical;
mod flow;
mod kde;
mod persist;

pub use categorical::{fit_categorical, CategoricalModel};
pub use flow::{CouplingLayer, CouplingStack, FlowConfig, FlowModel};
pub use kde::{Bandwidth, BandwidthKind, KdeModel, BANDWIDTH_FLOOR, FULL_JITTER};
pub use persist::{load_model, save_model, ModelManifest};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::ContinuousBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Categorical,
    Kde,
    Flow,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Categorical => "categorical",
            Estimator::Kde => "kde",
            Estimator::Flow => "flow",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "categorical" => Ok(Estimator::Categorical),
            "kde" => Ok(Estimator::Kde),
            "flow" => Ok(Estimator::Flow),
            _ => Err(Error::Usage(format!(
                "unknown estimator `{s}` (expected categorical, kde or flow)"
            ))),
        }
    }
}

/// A fitted continuous density over normalized joint vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityModel {
    Kde(KdeModel),
    Flow(FlowModel),
}

impl DensityModel {
    pub fn dim(&self) -> usize {
        match self {
            DensityModel::Kde(m) => m.dim(),
            DensityModel::Flow(m) => m.dim,
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        match self {
            DensityModel::Kde(m) => m.log_density(x),
            DensityModel::Flow(m) => m.log_density(x),
        }
    }

    pub fn log_density_many(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            DensityModel::Kde(m) => rows.iter().map(|r| m.log_density(r)).collect(),
            DensityModel::Flow(m) => m.log_density_many(rows),
        }
    }
}

pub fn fit_kde(b: &ContinuousBatch, kind: BandwidthKind) -> Result<KdeModel> {
    KdeModel::fit(b.joint_vectors()?, kind)
}

pub fn fit_flow(b: &ContinuousBatch, cfg: FlowConfig, seed: u64) -> Result<FlowModel> {
    b.ensure_nonempty()?;
    FlowModel::fit(&b.joint_vectors()?, cfg, seed)
}

/// Log-densities of the training batch under its own fitted model, sorted
/// ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Lambda(Vec<f64>);

impl Lambda {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| v.is_nan()) {
            return Err(Error::Numeric(format!("log-density {v} in Lambda")));
        }
        values.sort_by(f64::total_cmp);
        Ok(Lambda(values))
    }

    pub fn of_batch(model: &DensityModel, b: &ContinuousBatch) -> Result<Self> {
        Self::new(model.log_density_many(&b.joint_vectors()?)?)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Nearest-rank quantile: the `ceil(q n)`-th smallest value, or the minimum
/// when `q = 0`.
pub fn quantile_threshold(lam: &Lambda, q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Config(format!("quantile order {q} is outside [0, 1)")));
    }
    let n = lam.len();
    if n == 0 {
        return Err(Error::Empty("Lambda"));
    }
    let qn = q * n as f64;
    // 0.1 * 1000 and friends should not be bumped up a rank by rounding noise
    let rank = if (qn - qn.round()).abs() < 1e-9 {
        qn.round() as usize
    } else {
        qn.ceil() as usize
    };
    Ok(lam.0[rank.max(1) - 1])
}
