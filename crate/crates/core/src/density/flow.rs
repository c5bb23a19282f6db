//! Affine-coupling normalizing flow trained by maximum likelihood.
//!
//! The flow maps data `x` to a latent `z` through a stack of coupling layers.
//! Each layer keeps one half of the coordinates (the conditioner) fixed and
//! transforms the other half as
//!
//! ```text
//! y_t = x_t * exp(s(x_c)) + t(x_c),    s = exp(log_gain) * tanh(S(x_c))
//! ```
//!
//! so `log p(x) = log N(z; 0, I) + sum over layers of sum(s)`. Layers
//! alternate which half conditions the other; the split point is
//! `ceil(dim / 2)`, which for `(s, a, s')` vectors separates `(s, a)` from
//! `s'` exactly.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{gather_rows, to_matrix, Adam, AdamConfig, LrSchedule, Mlp, MlpCache, Params};
use crate::rng::{rng_for, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub layers: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            layers: 6,
            hidden: 64,
            hidden_layers: 2,
            lr: 1e-3,
            epochs: 1000,
            batch_size: 128,
            schedule: LrSchedule::Cosine,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "flow layers, hidden width, epochs and batch size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("invalid flow learning rate {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer {
    /// When true the first `split` coordinates condition the rest.
    pub cond_first: bool,
    pub split: usize,
    pub dim: usize,
    pub scale_net: Mlp,
    pub shift_net: Mlp,
    /// Per-coordinate log of the bound on `|s|`.
    pub log_gain: Array1<f64>,
}

struct LayerCache {
    xt: Array2<f64>,
    th: Array2<f64>,
    exp_s: Array2<f64>,
    scale_cache: MlpCache,
    shift_cache: MlpCache,
}

impl CouplingLayer {
    fn cond_range(&self) -> (usize, usize) {
        if self.cond_first {
            (0, self.split)
        } else {
            (self.split, self.dim)
        }
    }

    fn trans_range(&self) -> (usize, usize) {
        if self.cond_first {
            (self.split, self.dim)
        } else {
            (0, self.split)
        }
    }

    fn gain(&self) -> Array1<f64> {
        self.log_gain.mapv(f64::exp)
    }

    fn zeros_like(&self) -> Self {
        CouplingLayer {
            cond_first: self.cond_first,
            split: self.split,
            dim: self.dim,
            scale_net: self.scale_net.zeros_like(),
            shift_net: self.shift_net.zeros_like(),
            log_gain: Array1::zeros(self.log_gain.len()),
        }
    }

    fn scale_shift(&self, xc: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let th = self.scale_net.forward(xc).mapv(f64::tanh);
        let s = &th * &self.gain();
        (s, self.shift_net.forward(xc))
    }

    /// Returns the transformed batch; adds `sum(s)` per row to `logdet`.
    fn forward(&self, x: &Array2<f64>, logdet: &mut Array1<f64>) -> Array2<f64> {
        let (c0, c1) = self.cond_range();
        let (t0, t1) = self.trans_range();
        let xc = x.slice(s![.., c0..c1]).to_owned();
        let (sc, sh) = self.scale_shift(&xc);
        let mut y = x.clone();
        let mut yt = y.slice_mut(s![.., t0..t1]);
        yt.zip_mut_with(&sc, |v, &sv| *v *= sv.exp());
        yt += &sh;
        *logdet += &sc.sum_axis(Axis(1));
        y
    }

    fn forward_cached(&self, x: &Array2<f64>, logdet: &mut Array1<f64>) -> (Array2<f64>, LayerCache) {
        let (c0, c1) = self.cond_range();
        let (t0, t1) = self.trans_range();
        let xc = x.slice(s![.., c0..c1]).to_owned();
        let xt = x.slice(s![.., t0..t1]).to_owned();
        let (raw, scale_cache) = self.scale_net.forward_cached(&xc);
        let (shift, shift_cache) = self.shift_net.forward_cached(&xc);
        let th = raw.mapv(f64::tanh);
        let sc = &th * &self.gain();
        let exp_s = sc.mapv(f64::exp);
        *logdet += &sc.sum_axis(Axis(1));
        let mut y = x.clone();
        y.slice_mut(s![.., t0..t1]).assign(&(&xt * &exp_s + &shift));
        (
            y,
            LayerCache {
                xt,
                th,
                exp_s,
                scale_cache,
                shift_cache,
            },
        )
    }

    fn inverse(&self, y: &Array2<f64>) -> Array2<f64> {
        let (c0, c1) = self.cond_range();
        let (t0, t1) = self.trans_range();
        let yc = y.slice(s![.., c0..c1]).to_owned();
        let (sc, sh) = self.scale_shift(&yc);
        let mut x = y.clone();
        let xt = (&y.slice(s![.., t0..t1]) - &sh) * &sc.mapv(|v| (-v).exp());
        x.slice_mut(s![.., t0..t1]).assign(&xt);
        x
    }

    /// Backprop through one layer. `gy` is dL/dy; `logdet_weight` is dL/d(sum s)
    /// per row. Returns dL/dx.
    fn backward(
        &self,
        cache: &LayerCache,
        gy: &Array2<f64>,
        logdet_weight: f64,
        grads: &mut CouplingLayer,
    ) -> Array2<f64> {
        let (c0, c1) = self.cond_range();
        let (t0, t1) = self.trans_range();
        let gyt = gy.slice(s![.., t0..t1]);
        let gxt = &gyt * &cache.exp_s;
        let mut gs = &gxt * &cache.xt;
        gs += logdet_weight;
        let gain = self.gain();
        grads.log_gain += &((&gs * &cache.th).sum_axis(Axis(0)) * &gain);
        let mut graw = &gs * &gain;
        graw.zip_mut_with(&cache.th, |g, &t| *g *= 1.0 - t * t);

        let gxc_s = self.scale_net.backward(&cache.scale_cache, graw, &mut grads.scale_net);
        let gxc_t = self
            .shift_net
            .backward(&cache.shift_cache, gyt.to_owned(), &mut grads.shift_net);

        let mut gx = gy.clone();
        gx.slice_mut(s![.., t0..t1]).assign(&gxt);
        let mut gxc = gx.slice_mut(s![.., c0..c1]);
        gxc += &gxc_s;
        gxc += &gxc_t;
        gx
    }
}

/// The trainable part of a flow: an ordered list of coupling layers.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingStack {
    pub layers: Vec<CouplingLayer>,
}

impl Params for CouplingStack {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a [f64])) {
        for l in &self.layers {
            l.scale_net.visit(f);
            l.shift_net.visit(f);
            f(l.log_gain.as_slice().expect("standard layout"));
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            l.scale_net.visit_mut(f);
            l.shift_net.visit_mut(f);
            f(l.log_gain.as_slice_mut().expect("standard layout"));
        }
    }
}

impl CouplingStack {
    fn zeros_like(&self) -> Self {
        CouplingStack {
            layers: self.layers.iter().map(CouplingLayer::zeros_like).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    pub dim: usize,
    pub config: FlowConfig,
    pub seed: u64,
    pub stack: CouplingStack,
    /// Mean negative log-likelihood of each training epoch (over its minibatches).
    pub trace: Vec<f64>,
    pub initial_nll: f64,
    pub final_nll: f64,
}

fn half_log_2pi() -> f64 {
    0.5 * (2.0 * PI).ln()
}

impl FlowModel {
    /// Untrained flow whose scale and shift outputs are exactly zero, i.e. the
    /// identity map with a standard normal density.
    pub fn identity(dim: usize, config: FlowConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if dim < 2 {
            return Err(Error::Config("a coupling flow needs at least two dimensions".into()));
        }
        let mut rng = rng_for(seed, tag::FLOW);
        let split = dim.div_ceil(2);
        let layers = (0..config.layers)
            .map(|k| {
                let cond_first = k % 2 == 0;
                let (n_cond, n_trans) = if cond_first {
                    (split, dim - split)
                } else {
                    (dim - split, split)
                };
                let mut sizes = vec![n_cond];
                sizes.extend(std::iter::repeat_n(config.hidden, config.hidden_layers));
                sizes.push(n_trans);
                CouplingLayer {
                    cond_first,
                    split,
                    dim,
                    scale_net: Mlp::new(&sizes, &mut rng, true),
                    shift_net: Mlp::new(&sizes, &mut rng, true),
                    log_gain: Array1::zeros(n_trans),
                }
            })
            .collect();
        Ok(FlowModel {
            dim,
            config,
            seed,
            stack: CouplingStack { layers },
            trace: Vec::new(),
            initial_nll: f64::NAN,
            final_nll: f64::NAN,
        })
    }

    /// Maps data to latent space; returns `(z, log|det J|)` per row.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let mut logdet = Array1::zeros(x.nrows());
        let mut h = x.clone();
        for l in &self.stack.layers {
            h = l.forward(&h, &mut logdet);
        }
        (h, logdet)
    }

    pub fn inverse(&self, z: &Array2<f64>) -> Array2<f64> {
        let mut h = z.clone();
        for l in self.stack.layers.iter().rev() {
            h = l.inverse(&h);
        }
        h
    }

    pub fn log_density_batch(&self, x: &Array2<f64>) -> Array1<f64> {
        let (z, logdet) = self.forward(x);
        let base = z.map_axis(Axis(1), |r| {
            -0.5 * r.dot(&r) - self.dim as f64 * half_log_2pi()
        });
        base + logdet
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_rows(std::slice::from_ref(&x.to_vec()))?;
        let m = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape");
        Ok(self.log_density_batch(&m)[0])
    }

    pub fn log_density_many(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_rows(rows)?;
        Ok(self.log_density_batch(&to_matrix(rows)).to_vec())
    }

    fn check_rows(&self, rows: &[Vec<f64>]) -> Result<()> {
        for r in rows {
            if r.len() != self.dim {
                return Err(Error::Dimension {
                    expected: self.dim,
                    got: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite flow input".into()));
            }
        }
        Ok(())
    }

    /// Mean NLL of a batch and its gradient with respect to all parameters.
    pub fn nll_and_grad(&self, x: &Array2<f64>) -> (f64, CouplingStack) {
        let b = x.nrows() as f64;
        let mut logdet = Array1::zeros(x.nrows());
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.stack.layers.len());
        for l in &self.stack.layers {
            let (y, c) = l.forward_cached(&h, &mut logdet);
            caches.push(c);
            h = y;
        }
        let sq: f64 = h.iter().map(|v| v * v).sum();
        let loss = (0.5 * sq - logdet.sum()) / b + self.dim as f64 * half_log_2pi();

        let mut grads = self.stack.zeros_like();
        let mut g = h / b;
        for (k, l) in self.stack.layers.iter().enumerate().rev() {
            g = l.backward(&caches[k], &g, -1.0 / b, &mut grads.layers[k]);
        }
        (loss, grads)
    }

    pub fn mean_nll(&self, x: &Array2<f64>) -> f64 {
        -self.log_density_batch(x).mean().unwrap_or(f64::NAN)
    }

    fn layer_norms(&self) -> String {
        self.stack
            .layers
            .iter()
            .map(|l| {
                let mut acc = l.scale_net.sum_of_squares() + l.shift_net.sum_of_squares();
                acc += l.log_gain.iter().map(|v| v * v).sum::<f64>();
                format!("{:.3e}", acc.sqrt())
            })
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Trains from identity initialization with Adam on minibatch mean NLL.
    pub fn fit(rows: &[Vec<f64>], config: FlowConfig, seed: u64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("flow training data"));
        }
        let dim = rows[0].len();
        let mut model = Self::identity(dim, config, seed)?;
        model.check_rows(rows)?;
        let data = to_matrix(rows);
        model.initial_nll = model.mean_nll(&data);

        let mut rng = rng_for(seed, tag::FLOW ^ 0xF10);
        let mut opt = Adam::new(
            AdamConfig {
                lr: config.lr,
                ..Default::default()
            },
            &model.stack,
        );
        let mut order: Vec<usize> = (0..rows.len()).collect();
        for epoch in 0..config.epochs {
            opt.set_lr(config.schedule.rate(config.lr, epoch, config.epochs));
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let mb = gather_rows(&data, chunk);
                let (loss, grads) = model.nll_and_grad(&mb);
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        detail: format!("flow loss {loss}; layer norms [{}]", model.layer_norms()),
                    });
                }
                total += loss * chunk.len() as f64;
                opt.step(&mut model.stack, &grads);
            }
            model.trace.push(total / rows.len() as f64);
        }
        model.final_nll = model.mean_nll(&data);
        if !model.final_nll.is_finite() {
            return Err(Error::Diverged {
                epoch: config.epochs,
                detail: format!("final NLL {}; layer norms [{}]", model.final_nll, model.layer_norms()),
            });
        }
        log::debug!(
            "flow fit: dim={dim} n={} nll {:.4} -> {:.4}",
            rows.len(),
            model.initial_nll,
            model.final_nll
        );
        Ok(model)
    }
}
