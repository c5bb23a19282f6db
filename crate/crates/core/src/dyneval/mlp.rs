//! MLP regressor `(s, a) -> s'` in normalized units.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{gather_rows, to_matrix, Adam, AdamConfig, LrSchedule, Mlp, Params};
use crate::rng::{rng_for, tag};
use crate::space::{ContinuousBatch, ContinuousSpaceMeta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub hidden_layers: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 64,
            hidden_layers: 2,
            lr: 1e-3,
            epochs: 300,
            batch_size: 64,
            schedule: LrSchedule::Cosine,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "MLP hidden width, epochs and batch size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("invalid MLP learning rate {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpDynamics {
    pub meta: ContinuousSpaceMeta,
    pub config: MlpConfig,
    pub seed: u64,
    pub net: Mlp,
    /// Mean training MSE of each epoch.
    pub trace: Vec<f64>,
    pub train_mse: f64,
}

/// Normalized inputs `(s, a)` and targets `s'` of a batch.
pub fn regression_data(b: &ContinuousBatch) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut xs = Vec::with_capacity(b.len());
    let mut ys = Vec::with_capacity(b.len());
    for t in b.iter() {
        xs.push(b.meta.input_vector(&t.s, t.a)?);
        ys.push(b.meta.normalize(&t.s_next)?);
    }
    Ok((to_matrix(&xs), to_matrix(&ys)))
}

/// Mean over rows and outputs of the squared error, and its gradient.
fn mse_and_grad(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let diff = pred - target;
    let n = diff.len() as f64;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
    (loss, diff * (2.0 / n))
}

impl MlpDynamics {
    pub fn fit(b: &ContinuousBatch, config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        b.ensure_nonempty()?;
        let (x, y) = regression_data(b)?;
        let mut sizes = vec![x.ncols()];
        sizes.extend(std::iter::repeat_n(config.hidden, config.hidden_layers));
        sizes.push(y.ncols());
        let mut rng = rng_for(seed, tag::MLP);
        let mut net = Mlp::new(&sizes, &mut rng, false);
        let mut opt = Adam::new(
            AdamConfig {
                lr: config.lr,
                ..Default::default()
            },
            &net,
        );
        let mut order: Vec<usize> = (0..b.len()).collect();
        let mut trace = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            opt.set_lr(config.schedule.rate(config.lr, epoch, config.epochs));
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let xb = gather_rows(&x, chunk);
                let yb = gather_rows(&y, chunk);
                let (out, cache) = net.forward_cached(&xb);
                let (loss, g) = mse_and_grad(&out, &yb);
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        detail: format!("MLP loss {loss}; weight norm {:.3e}", net.sum_of_squares().sqrt()),
                    });
                }
                total += loss * chunk.len() as f64;
                let mut grads = net.zeros_like();
                net.backward(&cache, g, &mut grads);
                opt.step(&mut net, &grads);
            }
            trace.push(total / b.len() as f64);
        }
        let train_mse = mse_and_grad(&net.forward(&x), &y).0;
        log::debug!("mlp fit: n={} mse {:.3e}", b.len(), train_mse);
        Ok(MlpDynamics {
            meta: b.meta.clone(),
            config,
            seed,
            net,
            trace,
            train_mse,
        })
    }

    /// Predicted next state in raw units.
    pub fn predict(&self, s: &[f64], a: f64) -> Result<Vec<f64>> {
        let x = to_matrix(&[self.meta.input_vector(s, a)?]);
        let out = self.net.forward(&x);
        self.meta.denormalize(out.row(0).as_slice().expect("row slice"))
    }

    /// Mean squared error on `b`, in normalized units.
    pub fn mse(&self, b: &ContinuousBatch) -> Result<f64> {
        if b.meta != self.meta {
            return Err(Error::BatchType("evaluation batch has a different space".into()));
        }
        b.ensure_nonempty()?;
        let (x, y) = regression_data(b)?;
        let loss = mse_and_grad(&self.net.forward(&x), &y).0;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("evaluation MSE {loss}")));
        }
        Ok(loss)
    }
}

pub fn fit_mlp(b: &ContinuousBatch, config: MlpConfig, seed: u64) -> Result<MlpDynamics> {
    MlpDynamics::fit(b, config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Env;
    use crate::rng::rng_from_seed;
    use crate::space::{EnvKind, TransitionC};
    use rand::Rng as _;

    fn identity_batch(n: usize, seed: u64) -> ContinuousBatch {
        let meta = ContinuousSpaceMeta::cartpole();
        let mut rng = rng_from_seed(seed);
        let ts = (0..n)
            .map(|_| {
                let s: Vec<f64> = meta
                    .feature_bounds
                    .iter()
                    .map(|&b| rng.random_range(-0.5 * b..0.5 * b))
                    .collect();
                let a = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                TransitionC::new(s.clone(), a, s)
            })
            .collect();
        ContinuousBatch::new(meta, ts, seed).unwrap()
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let b = identity_batch(2, 1);
        let (x, y) = regression_data(&b).unwrap();
        let mut rng = rng_from_seed(2);
        let mut net = Mlp::new(&[5, 6, 6, 4], &mut rng, false);
        let (out, cache) = net.forward_cached(&x);
        let (_, g) = mse_and_grad(&out, &y);
        let mut grads = net.zeros_like();
        net.backward(&cache, g, &mut grads);
        let analytic = grads.flatten();
        let theta = net.flatten();
        let h = 1e-6;
        for (i, &ga) in analytic.iter().enumerate() {
            let mut p = theta.clone();
            p[i] += h;
            net.assign(&p);
            let lp = mse_and_grad(&net.forward(&x), &y).0;
            p[i] -= 2.0 * h;
            net.assign(&p);
            let lm = mse_and_grad(&net.forward(&x), &y).0;
            let gn = (lp - lm) / (2.0 * h);
            let rel = (ga - gn).abs() / ga.abs().max(gn.abs()).max(1e-8);
            assert!(rel <= 1e-4 || (ga - gn).abs() < 1e-10, "param {i}: {ga} vs {gn}");
        }
    }

    #[test]
    fn learns_identity_map() {
        let train = identity_batch(1000, 3);
        let test = identity_batch(500, 4);
        let m = fit_mlp(&train, MlpConfig::default(), 5).unwrap();
        let mse = m.mse(&test).unwrap();
        assert!(mse <= 1e-3, "eval mse {mse}");
        assert!(m.trace.last().unwrap() < &m.trace[0]);
    }

    #[test]
    fn deterministic_per_seed() {
        let b = Env::new(EnvKind::CartPole, 1).unwrap().collect_continuous(200, 1).unwrap();
        let cfg = MlpConfig {
            epochs: 5,
            ..Default::default()
        };
        let a = fit_mlp(&b, cfg, 9).unwrap();
        let c = fit_mlp(&b, cfg, 9).unwrap();
        assert_eq!(a.net, c.net);
        assert_ne!(a.net, fit_mlp(&b, cfg, 10).unwrap().net);
    }

    #[test]
    fn predict_is_in_raw_units() {
        let b = identity_batch(500, 6);
        let m = fit_mlp(&b, MlpConfig::default(), 1).unwrap();
        let s = [0.5, -1.0, 0.05, 0.8];
        let p = m.predict(&s, 1.0).unwrap();
        for (a, b) in p.iter().zip(&s) {
            assert!((a - b).abs() < 0.1, "{p:?}");
        }
    }

    #[test]
    fn divergence_is_reported() {
        let meta = ContinuousSpaceMeta::cartpole();
        let t = TransitionC::new(vec![1e200, 0.0, 0.0, 0.0], 1.0, vec![1e200, 0.0, 0.0, 0.0]);
        let b = ContinuousBatch::new(meta, vec![t], 0).unwrap();
        let cfg = MlpConfig {
            epochs: 3,
            ..Default::default()
        };
        assert!(matches!(fit_mlp(&b, cfg, 0), Err(Error::Diverged { epoch: 0, .. })));
    }
}
