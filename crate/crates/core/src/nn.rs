//! Small dense networks with hand-written backprop and an Adam optimizer.
//!
//! Both the flow subnetworks and the dynamics regressor are built from
//! [`Mlp`]. Gradients are stored in a value of the same type as the model, so
//! the [`Params`] visitor walks models and gradients in the same order.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Visits every trainable tensor as a flat slice, always in the same order.
pub trait Params {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a [f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    /// Overwrites all parameters from `flat`. Panics if the length is wrong.
    fn assign(&mut self, flat: &[f64]) {
        let mut off = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        });
        assert_eq!(off, flat.len(), "parameter vector length mismatch");
    }

    fn fill_zero(&mut self) {
        self.visit_mut(&mut |s| s.fill(0.0));
    }

    fn sum_of_squares(&self) -> f64 {
        let mut acc = 0.0;
        self.visit(&mut |s| acc += s.iter().map(|v| v * v).sum::<f64>());
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in x out`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        let lim = (6.0 / (n_in + n_out) as f64).sqrt();
        let w = Array2::from_shape_fn((n_in, n_out), |_| rng.random_range(-lim..lim));
        Dense {
            w,
            b: Array1::zeros(n_out),
        }
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            w: Array2::zeros((n_in, n_out)),
            b: Array1::zeros(n_out),
        }
    }
}

/// Tanh hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Layer inputs recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// `sizes = [in, hidden.., out]`. With `zero_output` the last layer starts
    /// at zero so the network initially outputs exactly zero.
    pub fn new(sizes: &[usize], rng: &mut Rng, zero_output: bool) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                if zero_output && k == last {
                    Dense::zeros(w[0], w[1])
                } else {
                    Dense::glorot(w[0], w[1], rng)
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|d| Dense::zeros(d.w.nrows(), d.w.ncols()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (k, d) in self.layers.iter().enumerate() {
            h = h.dot(&d.w) + &d.b;
            if k < last {
                h.mapv_inplace(f64::tanh);
            }
        }
        h
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (k, d) in self.layers.iter().enumerate() {
            let mut z = h.dot(&d.w) + &d.b;
            if k < last {
                z.mapv_inplace(f64::tanh);
            }
            inputs.push(h);
            h = z;
        }
        (h, MlpCache { inputs })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the network input.
    pub fn backward(&self, cache: &MlpCache, grad_out: Array2<f64>, grads: &mut Mlp) -> Array2<f64> {
        let mut g = grad_out;
        for k in (0..self.layers.len()).rev() {
            let h = &cache.inputs[k];
            grads.layers[k].w += &h.t().dot(&g);
            grads.layers[k].b += &g.sum_axis(Axis(0));
            let mut gin = g.dot(&self.layers[k].w.t());
            if k > 0 {
                // h is tanh of the previous pre-activation
                gin.zip_mut_with(h, |gi, &hv| *gi *= 1.0 - hv * hv);
            }
            g = gin;
        }
        g
    }
}

impl Params for Mlp {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a [f64])) {
        for d in &self.layers {
            f(d.w.as_slice().expect("standard layout"));
            f(d.b.as_slice().expect("standard layout"));
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for d in &mut self.layers {
            f(d.w.as_slice_mut().expect("standard layout"));
            f(d.b.as_slice_mut().expect("standard layout"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new<P: Params>(cfg: AdamConfig, model: &P) -> Self {
        let n = model.param_count();
        Adam {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn step<P: Params>(&mut self, model: &mut P, grads: &P) {
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let g = grads.flatten();
        let (m, v) = (&mut self.m, &mut self.v);
        let mut off = 0;
        model.visit_mut(&mut |p| {
            for (k, pk) in p.iter_mut().enumerate() {
                let i = off + k;
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                *pk -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
            off += p.len();
        });
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from the base rate down to zero over the run.
    Cosine,
}

impl LrSchedule {
    /// Learning rate for `epoch` of `epochs`.
    pub fn rate(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let t = epoch as f64 / epochs.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// Rows of `data` selected by `idx`, as a dense matrix.
pub fn gather_rows(data: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    data.select(Axis(0), idx)
}

pub fn to_matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    let d = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}
