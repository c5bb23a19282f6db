use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use symmdp::batch_io::{read_batch, write_batch};
use symmdp::density::{
    fit_categorical, fit_flow, fit_kde, load_model, save_model, BandwidthKind, DensityModel,
    Estimator, FlowConfig,
};
use symmdp::dyneval::{delta_continuous, delta_discrete, MlpConfig};
use symmdp::envs::{Env, DEFAULT_EPISODE_LEN, DEFAULT_GRID_SIDE};
use symmdp::harness::{export_report, run_experiment_with_jobs, ExperimentConfig, Report};
use symmdp::space::{AnyBatch, ContinuousBatch, EnvKind};
use symmdp::symmetry::{
    augment_continuous, augment_discrete, detect_continuous, detect_discrete,
    force_augment_continuous, force_augment_discrete, lookup, DetectionResult, TransformSpec,
};
use symmdp::{Error, Result};

#[derive(Parser)]
#[command(name = "symmdp", version, about = "Detect MDP symmetries in transition batches and augment them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a uniform random policy and write the batch as CSV.
    Collect {
        #[arg(long)]
        env: EnvKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GRID_SIDE)]
        grid_side: usize,
        /// Grid steps per episode; 0 for one uninterrupted walk.
        #[arg(long, default_value_t = DEFAULT_EPISODE_LEN)]
        episode_len: usize,
    },
    /// Print nu_k (and theta for continuous batches) for one transform.
    Detect {
        #[command(flatten)]
        est: EstimatorArgs,
        #[arg(long)]
        transform: String,
        #[arg(long, default_value_t = 0.1)]
        q: f64,
        /// Also report whether nu_k clears this threshold.
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Append the transformed batch when nu_k > nu.
    Augment {
        #[command(flatten)]
        est: EstimatorArgs,
        #[arg(long)]
        transform: String,
        #[arg(long, default_value_t = 0.1)]
        q: f64,
        #[arg(long, required_unless_present = "force")]
        nu: Option<f64>,
        /// Augment without running detection.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a continuous density model and save it.
    Fit {
        #[command(flatten)]
        est: EstimatorArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare dynamics models fitted on a raw and an augmented batch.
    Eval {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        augmented: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        eval_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run a seeded ensemble from a TOML config and write report.csv and report.json.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(clap::Args)]
struct EstimatorArgs {
    #[arg(long)]
    batch: PathBuf,
    /// Defaults to categorical for grid batches and flow otherwise.
    #[arg(long)]
    estimator: Option<Estimator>,
    /// Use a saved model instead of fitting one.
    #[arg(long, conflicts_with = "estimator")]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "full")]
    bandwidth: String,
    /// Flow training epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

fn parse_bandwidth(s: &str) -> Result<BandwidthKind> {
    match s.to_ascii_lowercase().as_str() {
        "full" => Ok(BandwidthKind::Full),
        "diagonal" => Ok(BandwidthKind::Diagonal),
        _ => Err(Error::Usage(format!("unknown bandwidth `{s}` (expected full or diagonal)"))),
    }
}

fn fit_density(b: &ContinuousBatch, args: &EstimatorArgs) -> Result<DensityModel> {
    if let Some(path) = &args.model {
        let (model, manifest) = load_model(path)?;
        if manifest.normalization.as_ref().is_some_and(|m| *m != b.meta) {
            return Err(Error::Config(format!(
                "model {} was fitted on a different space",
                path.display()
            )));
        }
        if model.dim() != b.meta.joint_dim() {
            return Err(Error::Dimension {
                expected: b.meta.joint_dim(),
                got: model.dim(),
            });
        }
        return Ok(model);
    }
    match args.estimator.unwrap_or(Estimator::Flow) {
        Estimator::Kde => Ok(DensityModel::Kde(fit_kde(b, parse_bandwidth(&args.bandwidth)?)?)),
        Estimator::Flow => {
            let mut cfg = FlowConfig::default();
            if let Some(e) = args.epochs {
                cfg.epochs = e;
            }
            Ok(DensityModel::Flow(fit_flow(b, cfg, args.seed)?))
        }
        Estimator::Categorical => Err(Error::Usage(
            "the categorical estimator applies to grid batches only".into(),
        )),
    }
}

fn transform_for(batch: &AnyBatch, name: &str) -> Result<TransformSpec> {
    lookup(batch.env(), name)
}

fn detect(batch: &AnyBatch, args: &EstimatorArgs, k: &TransformSpec, q: f64) -> Result<DetectionResult> {
    match batch {
        AnyBatch::Discrete(b) => {
            if args.model.is_some() || args.estimator.is_some_and(|e| e != Estimator::Categorical) {
                return Err(Error::Usage("grid batches use the categorical estimator".into()));
            }
            detect_discrete(&fit_categorical(b)?, b, k)
        }
        AnyBatch::Continuous(b) => detect_continuous(&fit_density(b, args)?, b, k, q),
    }
}

fn print_detection(r: &DetectionResult, json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(r)?);
        return Ok(());
    }
    println!("transform {}", r.transform);
    println!("nu_k {}", r.nu_k);
    if let Some(theta) = r.theta {
        println!("theta {theta}");
    }
    if let Some(nu) = r.nu {
        println!("nu {nu}");
        println!("augment {}", r.augmented);
    }
    Ok(())
}

fn print_summary(r: &Report) {
    println!(
        "{} / {} seeds completed, estimator {}, config {}",
        r.completed_seeds.len(),
        r.n_requested,
        r.estimator,
        &r.config_digest[..12]
    );
    if r.single_run {
        println!("single run: standard deviations are reported as 0");
    }
    for f in &r.failures {
        println!("seed {} excluded: {}", f.seed, f.error);
    }
    println!("{:<10} {:>16} {:>26}", "transform", "nu_k", "delta");
    for s in &r.summaries {
        let delta = match (s.mean.delta, s.std.delta) {
            (Some(m), Some(sd)) => format!("{m:.4e} ± {sd:.2e}"),
            _ => "-".into(),
        };
        println!(
            "{:<10} {:>16} {:>26}",
            s.transform,
            format!("{:.3} ± {:.3}", s.mean.nu_k, s.std.nu_k),
            delta
        );
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("SYMMDP_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Usage(format!("SYMMDP_SEED=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn env_for(batch: &AnyBatch) -> Result<Env> {
    match batch {
        AnyBatch::Discrete(b) => Env::new(EnvKind::Grid, b.meta.grid_side),
        AnyBatch::Continuous(b) => Env::new(b.meta.env, 0),
    }
}

fn write_out(dir: &Path, r: &Report, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    export_report(r, dir.join("report.csv"), "csv")?;
    export_report(r, dir.join("report.json"), "json")?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect {
            env,
            n,
            seed,
            out,
            grid_side,
            episode_len,
        } => {
            let mut e = Env::new(env, grid_side)?;
            if let Env::Grid(g) = &mut e {
                g.episode_len = (episode_len > 0).then_some(episode_len);
            }
            let b = e.collect(n, seed)?;
            write_batch(&b, &out)?;
            println!("wrote {} {} transitions to {}", b.len(), env, out.display());
        }
        Command::Detect {
            est,
            transform,
            q,
            nu,
            json,
        } => {
            let batch = read_batch(&est.batch)?;
            let k = transform_for(&batch, &transform)?;
            let mut r = detect(&batch, &est, &k, q)?;
            if let Some(nu) = nu {
                r = r.with_threshold(nu);
            }
            print_detection(&r, json)?;
        }
        Command::Augment {
            est,
            transform,
            q,
            nu,
            force,
            out,
        } => {
            let batch = read_batch(&est.batch)?;
            let k = transform_for(&batch, &transform)?;
            let augmented = if force {
                match &batch {
                    AnyBatch::Discrete(b) => AnyBatch::Discrete(force_augment_discrete(b, &k)?),
                    AnyBatch::Continuous(b) => AnyBatch::Continuous(force_augment_continuous(b, &k)?),
                }
            } else {
                let nu = nu.expect("clap requires --nu without --force");
                let r = detect(&batch, &est, &k, q)?.with_threshold(nu);
                print_detection(&r, false)?;
                match &batch {
                    AnyBatch::Discrete(b) => AnyBatch::Discrete(augment_discrete(b, &k, &r, nu)?),
                    AnyBatch::Continuous(b) => AnyBatch::Continuous(augment_continuous(b, &k, &r, nu)?),
                }
            };
            write_batch(&augmented, &out)?;
            println!("wrote {} transitions to {}", augmented.len(), out.display());
        }
        Command::Fit { est, out } => {
            if est.model.is_some() {
                return Err(Error::Usage("fit takes --estimator, not --model".into()));
            }
            let b = read_batch(&est.batch)?.into_continuous().map_err(|_| {
                Error::Usage("grid models are refitted from the batch; nothing to save".into())
            })?;
            let model = fit_density(&b, &est)?;
            let manifest = save_model(&model, Some(&b.meta), &out)?;
            println!("saved {} model ({} parameters) to {}", manifest.kind, manifest.param_count, out.display());
        }
        Command::Eval {
            batch,
            augmented,
            eval_n,
            seed,
            epochs,
        } => {
            let raw = read_batch(&batch)?;
            let aug = read_batch(&augmented)?;
            let env = env_for(&raw)?;
            let report = match (raw, aug) {
                (AnyBatch::Discrete(b), AnyBatch::Discrete(a)) => {
                    let Env::Grid(g) = env else { unreachable!("grid batch") };
                    delta_discrete(&b, &a, &g)?
                }
                (AnyBatch::Continuous(b), AnyBatch::Continuous(a)) => {
                    let mut cfg = MlpConfig::default();
                    if let Some(e) = epochs {
                        cfg.epochs = e;
                    }
                    delta_continuous(&b, &a, &env, eval_n, seed, cfg)?
                }
                _ => return Err(Error::BatchType("raw and augmented batches differ in kind".into())),
            };
            println!("metric {}", report.metric);
            println!("d_raw {}", report.d_raw);
            println!("d_aug {}", report.d_aug);
            println!("delta {}", report.delta);
        }
        Command::Experiment { config, out, jobs } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = env_seed()? {
                cfg = cfg.with_master_seed(seed);
            }
            let r = run_experiment_with_jobs(&cfg, jobs)?;
            write_out(&out, &r, &cfg)?;
            print_summary(&r);
            println!("reports written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
