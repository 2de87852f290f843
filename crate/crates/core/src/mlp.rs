//! Residual MLP mapping pair features to cost matrices.
//!
//! Layout for `hidden_layers = L` and `residual_period = p`:
//!
//! ```text
//! h_0 = relu(x W_0 + b_0)
//! h_l = relu(h_{l-1} W_l + b_l) [+ h_{l-p} when p > 0 and l % p == 0],  l = 1..L-1
//! out = h_{L-1} W_L + b_L
//! ```
//!
//! Inputs are batches: one row per variable pair. Each output row is the
//! `d x d` cost matrix of its pair, row-major, rows indexed by the value of
//! the lower-indexed variable.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// 0 disables residual connections.
    pub residual_period: usize,
    pub output_dim: usize,
}

impl MlpConfig {
    /// 10 hidden layers of 128 units with a skip every 2 layers.
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_width: 128,
            hidden_layers: 10,
            residual_period: 2,
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_width == 0 {
            return Err(Error::Config("MLP dimensions must be positive".into()));
        }
        if self.hidden_layers == 0 {
            return Err(Error::Config("MLP needs at least one hidden layer".into()));
        }
        Ok(())
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.input_dim, self.hidden_width)];
        shapes.extend((1..self.hidden_layers).map(|_| (self.hidden_width, self.hidden_width)));
        shapes.push((self.hidden_width, self.output_dim));
        shapes
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    fn has_skip(&self, l: usize) -> bool {
        self.residual_period > 0 && l >= self.residual_period && l.is_multiple_of(self.residual_period)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m_weights: Vec<Array2<f64>>,
    pub v_weights: Vec<Array2<f64>>,
    pub m_biases: Vec<Array1<f64>>,
    pub v_biases: Vec<Array1<f64>>,
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Decay weights directly (AdamW) instead of adding `weight_decay * w`
    /// to the gradient.
    pub decoupled: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            decoupled: true,
        }
    }
}

/// Weights, biases and optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub config: MlpConfig,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub adam: AdamState,
    /// Bumped on every update so stale activation caches are detected.
    generation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ParamGrad {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            weights: params.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: params.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// Flattened in layer order, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Activations recorded by [`ParamStore::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|x| x.max(0.0))
}

impl ParamStore {
    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn init(config: MlpConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        let weights: Vec<Array2<f64>> = shapes
            .iter()
            .map(|&(fan_in, fan_out)| {
                let bound = (6.0 / fan_in as f64).sqrt();
                Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound))
            })
            .collect();
        Ok(Self::from_weights(config, weights))
    }

    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let weights = config
            .layer_shapes()
            .iter()
            .map(|&s| Array2::zeros(s))
            .collect();
        Ok(Self::from_weights(config, weights))
    }

    fn from_weights(config: MlpConfig, weights: Vec<Array2<f64>>) -> Self {
        let biases: Vec<Array1<f64>> = weights.iter().map(|w| Array1::zeros(w.ncols())).collect();
        let adam = AdamState {
            m_weights: weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_weights: weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_biases: biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_biases: biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            step: 0,
        };
        Self {
            config,
            weights,
            biases,
            adam,
            generation: 0,
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Flattened in the same order as [`ParamGrad::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    /// Overwrites one parameter by flat index. Invalidates caches.
    pub fn set_flat(&mut self, mut idx: usize, value: f64) {
        self.generation += 1;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            if idx < w.len() {
                let cols = w.ncols();
                w[[idx / cols, idx % cols]] = value;
                return;
            }
            idx -= w.len();
            if idx < b.len() {
                b[idx] = value;
                return;
            }
            idx -= b.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        let cfg = &self.config;
        if x.ncols() != cfg.input_dim {
            return Err(Error::Structure(format!(
                "feature length {} differs from input_dim {}",
                x.ncols(),
                cfg.input_dim
            )));
        }
        let depth = cfg.hidden_layers;
        let mut pre = Vec::with_capacity(depth);
        let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(depth);
        for l in 0..depth {
            let z = {
                let src = if l == 0 { x } else { hidden[l - 1].view() };
                src.dot(&self.weights[l]) + &self.biases[l]
            };
            let mut h = relu(&z);
            if cfg.has_skip(l) {
                h += &hidden[l - cfg.residual_period];
            }
            pre.push(z);
            hidden.push(h);
        }
        let out = hidden[depth - 1].dot(&self.weights[depth]) + &self.biases[depth];
        Ok((
            out,
            ForwardCache {
                generation: self.generation,
                input: x.to_owned(),
                pre,
                hidden,
            },
        ))
    }

    /// Forward pass for a single feature vector, returned as a row-major
    /// `d x d` matrix.
    pub fn predict_matrix(&self, features: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, features.len()), features)
            .map_err(|e| Error::Structure(e.to_string()))?;
        let (out, _) = self.forward(x)?;
        Ok(out.row(0).to_vec())
    }

    /// Reverse-mode gradient of `sum(upstream * output)` with respect to
    /// every parameter.
    pub fn backward(&self, cache: &ForwardCache, upstream: ArrayView2<'_, f64>) -> Result<ParamGrad> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache);
        }
        let cfg = &self.config;
        let depth = cfg.hidden_layers;
        if upstream.dim() != (cache.input.nrows(), cfg.output_dim) {
            return Err(Error::Structure(format!(
                "upstream shape {:?} differs from output shape ({}, {})",
                upstream.dim(),
                cache.input.nrows(),
                cfg.output_dim
            )));
        }
        let mut grad = ParamGrad::zeros_like(self);
        grad.weights[depth] = cache.hidden[depth - 1].t().dot(&upstream);
        grad.biases[depth] = upstream.sum_axis(Axis(0));

        let mut dh: Vec<Option<Array2<f64>>> = vec![None; depth];
        dh[depth - 1] = Some(upstream.dot(&self.weights[depth].t()));
        for l in (0..depth).rev() {
            let Some(d) = dh[l].take() else { continue };
            if cfg.has_skip(l) {
                let k = l - cfg.residual_period;
                match &mut dh[k] {
                    Some(acc) => *acc += &d,
                    slot @ None => *slot = Some(d.clone()),
                }
            }
            let mut dz = d;
            Zip::from(&mut dz).and(&cache.pre[l]).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            let src = if l == 0 { &cache.input } else { &cache.hidden[l - 1] };
            grad.weights[l] = src.t().dot(&dz);
            grad.biases[l] = dz.sum_axis(Axis(0));
            if l > 0 {
                let back = dz.dot(&self.weights[l].t());
                match &mut dh[l - 1] {
                    Some(acc) => *acc += &back,
                    slot @ None => *slot = Some(back),
                }
            }
        }
        Ok(grad)
    }

    /// One Adam update with bias correction.
    pub fn adam_step(&mut self, grad: &ParamGrad, cfg: &AdamConfig) -> Result<()> {
        if grad.weights.len() != self.weights.len() || grad.biases.len() != self.biases.len() {
            return Err(Error::Structure("gradient layer count mismatch".into()));
        }
        for (l, (gw, gb)) in grad.weights.iter().zip(&grad.biases).enumerate() {
            if gw.raw_dim() != self.weights[l].raw_dim() || gb.raw_dim() != self.biases[l].raw_dim() {
                return Err(Error::Structure(format!("gradient shape mismatch at layer {l}")));
            }
            if gw.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    tensor: format!("weights[{l}]"),
                });
            }
            if gb.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    tensor: format!("biases[{l}]"),
                });
            }
        }

        self.adam.step += 1;
        self.generation += 1;
        let t = self.adam.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            let g = if cfg.decoupled { g } else { g + cfg.weight_decay * *p };
            if cfg.decoupled {
                *p -= cfg.lr * cfg.weight_decay * *p;
            }
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        };
        for l in 0..self.weights.len() {
            Zip::from(&mut self.weights[l])
                .and(&mut self.adam.m_weights[l])
                .and(&mut self.adam.v_weights[l])
                .and(&grad.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut self.biases[l])
                .and(&mut self.adam.m_biases[l])
                .and(&mut self.adam.v_biases[l])
                .and(&grad.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume or reuse a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params: ParamStore,
    pub rng: ChaCha8Rng,
    /// Free-form metadata (problem size, training configuration, ...).
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn new(params: ParamStore, rng: ChaCha8Rng) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            params,
            rng,
            meta: BTreeMap::new(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} not supported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}
