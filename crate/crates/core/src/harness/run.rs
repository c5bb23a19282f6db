use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::report::{summarize, Report, SeedFailure, SeedRow, Values};
use crate::density::{fit_categorical, fit_flow, fit_kde, DensityModel, Estimator, Lambda};
use crate::dyneval::{delta_discrete, evaluation_batch, fit_mlp, Metric, ShiftReport};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::space::{AnyBatch, ContinuousBatch, DiscreteBatch};
use crate::symmetry::{
    detect_discrete, detect_with_lambda, force_augment_continuous, force_augment_discrete,
    DetectionResult, TransformSpec,
};

fn make_row(cfg: &ExperimentConfig, seed: u64, det: &DetectionResult, shift: Option<ShiftReport>) -> SeedRow {
    SeedRow {
        env: cfg.env,
        transform: det.transform.clone(),
        seed,
        values: Values {
            nu_k: det.nu_k,
            theta: det.theta,
            d_raw: shift.as_ref().map(|s| s.d_raw),
            d_aug: shift.as_ref().map(|s| s.d_aug),
            delta: shift.as_ref().map(|s| s.delta),
        },
        metric: shift.map(|s| s.metric),
        augmented: cfg.nu.map(|nu| det.nu_k > nu),
    }
}

fn run_discrete(
    cfg: &ExperimentConfig,
    env: &Env,
    b: &DiscreteBatch,
    specs: &[TransformSpec],
    seed: u64,
) -> Result<Vec<SeedRow>> {
    let Env::Grid(grid) = env else {
        return Err(Error::BatchType("discrete batch from a continuous environment".into()));
    };
    let model = fit_categorical(b)?;
    specs
        .iter()
        .map(|k| {
            let det = detect_discrete(&model, b, k)?;
            let shift = if cfg.measures_shift(&k.name) {
                Some(delta_discrete(b, &force_augment_discrete(b, k)?, grid)?)
            } else {
                None
            };
            Ok(make_row(cfg, seed, &det, shift))
        })
        .collect()
}

fn run_continuous(
    cfg: &ExperimentConfig,
    env: &Env,
    b: &ContinuousBatch,
    specs: &[TransformSpec],
    seed: u64,
) -> Result<Vec<SeedRow>> {
    let model = match cfg.estimator() {
        Estimator::Flow => DensityModel::Flow(fit_flow(b, cfg.flow, seed)?),
        Estimator::Kde => DensityModel::Kde(fit_kde(b, cfg.kde.bandwidth)?),
        Estimator::Categorical => {
            return Err(Error::Config("categorical estimator on a continuous batch".into()))
        }
    };
    let lam = Lambda::of_batch(&model, b)?;
    let wants_shift = specs.iter().any(|k| cfg.measures_shift(&k.name));
    // the raw-batch regressor and the evaluation set are shared by all transforms
    let baseline = if wants_shift {
        let eval = evaluation_batch(env, cfg.eval_n, seed)?;
        let raw = fit_mlp(b, cfg.mlp, seed)?;
        let d_raw = raw.mse(&eval)?;
        Some((eval, d_raw))
    } else {
        None
    };
    specs
        .iter()
        .map(|k| {
            let det = detect_with_lambda(&model, &lam, b, k, cfg.q)?;
            let shift = match &baseline {
                Some((eval, d_raw)) if cfg.measures_shift(&k.name) => {
                    let aug = fit_mlp(&force_augment_continuous(b, k)?, cfg.mlp, seed)?;
                    Some(ShiftReport::new(*d_raw, aug.mse(eval)?, Metric::Mse, eval.len()))
                }
                _ => None,
            };
            Ok(make_row(cfg, seed, &det, shift))
        })
        .collect()
}

/// Every stage of one ensemble member, from collection to shift measurement.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<SeedRow>> {
    let env = cfg.build_env()?;
    let specs = cfg.resolve_transforms()?;
    match env.collect(cfg.batch_size, seed)? {
        AnyBatch::Discrete(b) => run_discrete(cfg, &env, &b, &specs, seed),
        AnyBatch::Continuous(b) => run_continuous(cfg, &env, &b, &specs, seed),
    }
}

/// Runs all seeds of the ensemble and aggregates the completed ones.
///
/// A failing seed is logged and left out of the statistics; the experiment
/// fails only when no seed completes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let seeds: Vec<u64> = cfg.seeds().collect();
    let outcomes: Vec<(u64, Result<Vec<SeedRow>>)> = seeds
        .par_iter()
        .map(|&seed| (seed, run_seed(cfg, seed)))
        .collect();
    fold(cfg, outcomes)
}

/// Ordered fold of per-seed outcomes into a report.
fn fold(cfg: &ExperimentConfig, outcomes: Vec<(u64, Result<Vec<SeedRow>>)>) -> Result<Report> {
    let mut rows = Vec::new();
    let mut completed = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(r) => {
                rows.extend(r);
                completed.push(seed);
            }
            Err(e) => {
                log::warn!("seed {seed} failed and is excluded: {e}");
                failures.push(SeedFailure {
                    seed,
                    error: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    if completed.is_empty() {
        return Err(first_error.expect("at least one seed ran"));
    }
    // group rows by transform, seeds ascending within each group
    let order: Vec<String> = cfg.resolve_transforms()?.into_iter().map(|k| k.name).collect();
    rows.sort_by_key(|r| (order.iter().position(|n| *n == r.transform), r.seed));
    Ok(Report {
        env: cfg.env,
        estimator: cfg.estimator(),
        config_digest: cfg.digest(),
        n_requested: cfg.n_seeds,
        single_run: completed.len() == 1,
        incomplete: !failures.is_empty(),
        completed_seeds: completed,
        failures,
        summaries: summarize(&rows),
        rows,
    })
}

/// As [`run_experiment`] on a dedicated pool of `jobs` worker threads.
pub fn run_experiment_with_jobs(cfg: &ExperimentConfig, jobs: usize) -> Result<Report> {
    if jobs == 0 {
        return Err(Error::Usage("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| run_experiment(cfg))
}
