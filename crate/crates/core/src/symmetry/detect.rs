use serde::{Deserialize, Serialize};

use super::transform::TransformSpec;
use crate::density::{quantile_threshold, CategoricalModel, DensityModel, Lambda};
use crate::envs::{Env, GridEnv};
use crate::error::{Error, Result};
use crate::space::{ContinuousBatch, DiscreteBatch, TransitionC, TransitionD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub transform: String,
    pub nu_k: f64,
    /// Log-density threshold; absent for discrete detection.
    pub theta: Option<f64>,
    pub q: Option<f64>,
    pub batch_size: usize,
    /// Acceptance threshold, when one was supplied.
    pub nu: Option<f64>,
    pub augmented: bool,
}

impl DetectionResult {
    fn new(k: &TransformSpec, nu_k: f64, theta: Option<f64>, q: Option<f64>, n: usize) -> Self {
        DetectionResult {
            transform: k.name.clone(),
            nu_k,
            theta,
            q,
            batch_size: n,
            nu: None,
            augmented: false,
        }
    }

    pub fn with_threshold(mut self, nu: f64) -> Self {
        self.nu = Some(nu);
        self.augmented = self.nu_k > nu;
        self
    }
}

pub fn transform_discrete(b: &DiscreteBatch, k: &TransformSpec) -> Result<Vec<TransitionD>> {
    b.iter().map(|t| k.apply_discrete(t, &b.meta)).collect()
}

pub fn transform_continuous(b: &ContinuousBatch, k: &TransformSpec) -> Result<Vec<TransitionC>> {
    b.iter().map(|t| k.apply_continuous(t, &b.meta)).collect()
}

/// Fraction of transformed transitions whose successor has estimated
/// probability exactly one.
pub fn detect_discrete(
    m: &CategoricalModel,
    b: &DiscreteBatch,
    k: &TransformSpec,
) -> Result<DetectionResult> {
    b.ensure_nonempty()?;
    let image = transform_discrete(b, k)?;
    let mut hits = 0usize;
    for t in &image {
        if m.prob(t.s, t.a, t.s_next)? == 1.0 {
            hits += 1;
        }
    }
    Ok(DetectionResult::new(k, hits as f64 / image.len() as f64, None, None, b.len()))
}

/// Fraction of transformed transitions with log-density strictly above the
/// `q`-quantile of the batch's own log-densities.
pub fn detect_continuous(
    m: &DensityModel,
    b: &ContinuousBatch,
    k: &TransformSpec,
    q: f64,
) -> Result<DetectionResult> {
    let lam = Lambda::of_batch(m, b)?;
    detect_with_lambda(m, &lam, b, k, q)
}

/// As [`detect_continuous`] with a precomputed Λ, so several transforms can
/// share one evaluation of the training batch.
pub fn detect_with_lambda(
    m: &DensityModel,
    lam: &Lambda,
    b: &ContinuousBatch,
    k: &TransformSpec,
    q: f64,
) -> Result<DetectionResult> {
    b.ensure_nonempty()?;
    let theta = quantile_threshold(lam, q)?;
    let rows = transform_continuous(b, k)?
        .iter()
        .map(|t| b.meta.joint_vector(t))
        .collect::<Result<Vec<_>>>()?;
    let dens = m.log_density_many(&rows)?;
    if let Some(v) = dens.iter().find(|v| v.is_nan()) {
        return Err(Error::Numeric(format!("log-density {v} for transform {}", k.name)));
    }
    let hits = dens.iter().filter(|&&v| v > theta).count();
    Ok(DetectionResult::new(
        k,
        hits as f64 / rows.len() as f64,
        Some(theta),
        Some(q),
        b.len(),
    ))
}

pub fn augment_discrete(
    b: &DiscreteBatch,
    k: &TransformSpec,
    result: &DetectionResult,
    nu: f64,
) -> Result<DiscreteBatch> {
    if result.nu_k > nu {
        b.concat_synthetic(transform_discrete(b, k)?)
    } else {
        Ok(b.clone())
    }
}

pub fn augment_continuous(
    b: &ContinuousBatch,
    k: &TransformSpec,
    result: &DetectionResult,
    nu: f64,
) -> Result<ContinuousBatch> {
    if result.nu_k > nu {
        b.concat_synthetic(transform_continuous(b, k)?)
    } else {
        Ok(b.clone())
    }
}

/// `D ++ k(D)` regardless of any threshold.
pub fn force_augment_discrete(b: &DiscreteBatch, k: &TransformSpec) -> Result<DiscreteBatch> {
    b.concat_synthetic(transform_discrete(b, k)?)
}

pub fn force_augment_continuous(b: &ContinuousBatch, k: &TransformSpec) -> Result<ContinuousBatch> {
    b.concat_synthetic(transform_continuous(b, k)?)
}

/// Whether the image of `t` under `k` is itself a simulator transition.
pub fn grid_consistent(env: &GridEnv, k: &TransformSpec, t: &TransitionD) -> Result<bool> {
    Ok(env.replays(&k.apply_discrete(t, &env.meta)?))
}

/// Max-abs gap between `step(f(s), g(a))` and `l(s')`.
pub fn continuous_residual(env: &Env, k: &TransformSpec, t: &TransitionC) -> Result<f64> {
    let meta = env.continuous_meta()?;
    let img = k.apply_continuous(t, &meta)?;
    let next = env.step_continuous(&img.s, img.a)?;
    Ok(next
        .iter()
        .zip(&img.s_next)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{fit_categorical, fit_kde, BandwidthKind, KdeModel};
    use crate::space::{Batch, Cell, ContinuousSpaceMeta, DiscreteSpaceMeta, EnvKind, GridAction};
    use crate::symmetry::{lookup, Endpoint, StateMap, StateOp};

    fn small_grid_batch() -> DiscreteBatch {
        let meta = DiscreteSpaceMeta::new(10).unwrap();
        let ts = vec![
            TransitionD::new(Cell::new(5, 5), GridAction::Up, Cell::new(5, 6)),
            TransitionD::new(Cell::new(5, 6), GridAction::Down, Cell::new(5, 5)),
            TransitionD::new(Cell::new(2, 2), GridAction::Right, Cell::new(3, 2)),
            TransitionD::new(Cell::new(0, 0), GridAction::Left, Cell::new(9, 0)),
        ];
        DiscreteBatch::new(meta, ts, 0).unwrap()
    }

    #[test]
    fn discrete_identity_and_trsai() {
        let b = small_grid_batch();
        let m = fit_categorical(&b).unwrap();
        let id = detect_discrete(&m, &b, &TransformSpec::identity()).unwrap();
        assert_eq!(id.nu_k, 1.0);
        assert_eq!(id.theta, None);
        // the first two rows are each other's reversal
        let r = detect_discrete(&m, &b, &lookup(EnvKind::Grid, "TRSAI").unwrap()).unwrap();
        assert_eq!(r.nu_k, 0.5);
        let r = detect_discrete(&m, &b, &lookup(EnvKind::Grid, "SDAI").unwrap()).unwrap();
        assert_eq!(r.nu_k, 0.0);
    }

    #[test]
    fn augment_gate() {
        let b = small_grid_batch();
        let m = fit_categorical(&b).unwrap();
        let k = lookup(EnvKind::Grid, "TRSAI").unwrap();
        let r = detect_discrete(&m, &b, &k).unwrap();
        let out = augment_discrete(&b, &k, &r, 0.4).unwrap();
        assert_eq!(out.len(), 2 * b.len());
        assert_eq!(out.synthetic().iter().filter(|&&x| x).count(), b.len());
        assert_eq!(&out.transitions()[..b.len()], b.transitions());
        assert_eq!(augment_discrete(&b, &k, &r, 0.5).unwrap(), b);
        assert!(r.clone().with_threshold(0.4).augmented);
        assert!(!r.with_threshold(0.5).augmented);
    }

    fn cartpole_batch() -> ContinuousBatch {
        Env::new(EnvKind::CartPole, 1)
            .unwrap()
            .collect_continuous(300, 4)
            .unwrap()
    }

    #[test]
    fn continuous_identity_tautology() {
        let b = cartpole_batch();
        let m = DensityModel::Kde(fit_kde(&b, BandwidthKind::Diagonal).unwrap());
        let r = detect_continuous(&m, &b, &TransformSpec::identity(), 0.1).unwrap();
        assert!((0.88..=0.90).contains(&r.nu_k), "{}", r.nu_k);
        assert_eq!(r.q, Some(0.1));
    }

    #[test]
    fn far_offset_is_never_detected() {
        let b = cartpole_batch();
        let m = DensityModel::Kde(fit_kde(&b, BandwidthKind::Diagonal).unwrap());
        let all = vec![0, 1, 2, 3];
        let off = |src| {
            StateMap::of(
                src,
                vec![StateOp::Offset {
                    features: all.clone(),
                    amount: 100.0,
                }],
            )
        };
        let k = TransformSpec::new("far", off(Endpoint::S), vec![], off(Endpoint::SNext));
        assert_eq!(detect_continuous(&m, &b, &k, 0.1).unwrap().nu_k, 0.0);
    }

    #[test]
    fn lambda_shared_matches_direct() {
        let b = cartpole_batch();
        let m = DensityModel::Kde(KdeModel::fit(b.joint_vectors().unwrap(), BandwidthKind::Full).unwrap());
        let lam = Lambda::of_batch(&m, &b).unwrap();
        let k = lookup(EnvKind::CartPole, "SAR").unwrap();
        assert_eq!(
            detect_with_lambda(&m, &lam, &b, &k, 0.1).unwrap(),
            detect_continuous(&m, &b, &k, 0.1).unwrap()
        );
    }

    #[test]
    fn augment_does_not_touch_input() {
        let b = cartpole_batch();
        let copy = b.clone();
        let k = lookup(EnvKind::CartPole, "SAR").unwrap();
        let out = force_augment_continuous(&b, &k).unwrap();
        assert_eq!(b, copy);
        assert_eq!(out.len(), 2 * b.len());
        // SAR is an involution, so transforming the images gives back D
        let back = transform_continuous(&Batch::new(b.meta.clone(), out.transitions()[b.len()..].to_vec(), 0).unwrap(), &k).unwrap();
        assert_eq!(back, b.transitions());
    }

    #[test]
    fn simulator_consistency_of_true_symmetries() {
        let env = Env::new(EnvKind::CartPole, 1).unwrap();
        let b = cartpole_batch();
        let sar = lookup(EnvKind::CartPole, "SAR").unwrap();
        let isr = lookup(EnvKind::CartPole, "ISR").unwrap();
        for t in b.iter() {
            assert!(continuous_residual(&env, &sar, t).unwrap() <= 1e-8);
            assert!(continuous_residual(&env, &isr, t).unwrap() > 1e-8);
        }
        let meta = ContinuousSpaceMeta::cartpole();
        assert_eq!(env.continuous_meta().unwrap(), meta);
    }
}
