use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::{BandwidthKind, Estimator, FlowConfig};
use crate::dyneval::MlpConfig;
use crate::envs::{Env, DEFAULT_EPISODE_LEN, DEFAULT_GRID_SIDE};
use crate::error::{Error, Result};
use crate::space::{Cell, DiscreteSpaceMeta, EnvKind, GridAction, TransitionC, TransitionD};
use crate::symmetry::{lookup, TransformSpec};

/// A transform named by catalog label or written out inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransformEntry {
    Label(String),
    Inline(TransformSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeSettings {
    pub bandwidth: BandwidthKind,
}

/// One experiment: an ensemble of `n_seeds` runs of
/// collect, fit, detect, augment and shift measurement.
///
/// Seed `i` of the ensemble is `master_seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    #[serde(default = "default_grid_side")]
    pub grid_side: usize,
    /// Grid steps per episode; 0 means a single uninterrupted walk.
    #[serde(default = "default_episode_len")]
    pub episode_len: usize,
    pub batch_size: usize,
    pub n_seeds: usize,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub nu: Option<f64>,
    /// Defaults to categorical on the grid and flow otherwise.
    #[serde(default)]
    pub estimator: Option<Estimator>,
    pub transforms: Vec<TransformEntry>,
    /// Transforms whose shift improvement is measured; all when absent.
    #[serde(default)]
    pub shift_transforms: Option<Vec<String>>,
    #[serde(default = "default_eval_n")]
    pub eval_n: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub kde: KdeSettings,
    #[serde(default)]
    pub mlp: MlpConfig,
}

fn default_grid_side() -> usize {
    DEFAULT_GRID_SIDE
}

fn default_episode_len() -> usize {
    DEFAULT_EPISODE_LEN
}

fn default_q() -> f64 {
    0.1
}

fn default_eval_n() -> usize {
    100_000
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn with_master_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator.unwrap_or(if self.env.is_discrete() {
            Estimator::Categorical
        } else {
            Estimator::Flow
        })
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.n_seeds as u64).map(|i| self.master_seed.wrapping_add(i))
    }

    pub fn build_env(&self) -> Result<Env> {
        let mut env = Env::new(self.env, self.grid_side)?;
        if let Env::Grid(g) = &mut env {
            g.episode_len = (self.episode_len > 0).then_some(self.episode_len);
        }
        Ok(env)
    }

    pub fn resolve_transforms(&self) -> Result<Vec<TransformSpec>> {
        self.transforms
            .iter()
            .map(|e| match e {
                TransformEntry::Label(l) => lookup(self.env, l),
                TransformEntry::Inline(k) => Ok(k.clone()),
            })
            .collect()
    }

    pub fn measures_shift(&self, name: &str) -> bool {
        match &self.shift_transforms {
            None => true,
            Some(names) => names.iter().any(|n| n.eq_ignore_ascii_case(name)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.q) {
            return Err(Error::Config(format!("q = {} is outside [0, 1)", self.q)));
        }
        if self.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be at least 1".into()));
        }
        if self.batch_size == 0 || self.eval_n == 0 {
            return Err(Error::Config("batch_size and eval_n must be positive".into()));
        }
        if let Some(nu) = self.nu {
            if !(0.0..=1.0).contains(&nu) {
                return Err(Error::Config(format!("nu = {nu} is outside [0, 1]")));
            }
        }
        match (self.env.is_discrete(), self.estimator()) {
            (true, Estimator::Categorical) | (false, Estimator::Kde | Estimator::Flow) => {}
            (_, est) => {
                return Err(Error::Config(format!(
                    "estimator {est} does not apply to {}",
                    self.env
                )))
            }
        }
        self.flow.validate()?;
        self.mlp.validate()?;
        if self.transforms.is_empty() {
            return Err(Error::Config("no transforms listed".into()));
        }
        let specs = self.resolve_transforms().map_err(|e| Error::Config(e.to_string()))?;
        let mut names = BTreeSet::new();
        for k in &specs {
            if !names.insert(k.name.to_ascii_uppercase()) {
                return Err(Error::Config(format!("transform `{}` listed twice", k.name)));
            }
            self.probe(k)
                .map_err(|e| Error::Config(format!("transform `{}`: {e}", k.name)))?;
        }
        if let Some(wanted) = &self.shift_transforms {
            if let Some(w) = wanted.iter().find(|w| !names.contains(&w.to_ascii_uppercase())) {
                return Err(Error::Config(format!(
                    "shift transform `{w}` is not in the transform list"
                )));
            }
        }
        self.build_env()?;
        Ok(())
    }

    /// Applies `k` to a placeholder transition to surface index and type
    /// errors before any run starts.
    fn probe(&self, k: &TransformSpec) -> Result<()> {
        if self.env.is_discrete() {
            let meta = DiscreteSpaceMeta::new(self.grid_side)?;
            let t = TransitionD::new(Cell::new(0, 0), GridAction::Up, Cell::new(0, 0));
            k.apply_discrete(&t, &meta).map(|_| ())
        } else {
            let meta = self.build_env()?.continuous_meta()?;
            let zero = vec![0.0; meta.state_dim];
            let t = TransitionC::new(zero.clone(), meta.action_values[0], zero);
            k.apply_continuous(&t, &meta).map(|_| ())
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
