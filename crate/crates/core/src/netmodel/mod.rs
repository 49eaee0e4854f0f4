//! The conditional average-velocity network `u(x_t, t1, t2, y)`.
//!
//! An MLP over `concat(x_t, y, embed(t1), embed(t2))` with SiLU hidden layers
//! and a linear output layer. The forward pass is generic over [`Kernel`], so
//! the same code evaluates eagerly, records a gradient tape, or carries dual
//! tangents for the JVP objective.

mod checkpoint;
mod embed;

use std::f64::consts::TAU;

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

pub use checkpoint::{from_bytes, load, save, to_bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use embed::{fourier_embed, frequencies};

use crate::error::{Error, Result};
use crate::flowcore::VelocityModel;
use crate::numkit::{Eager, Kernel, Tensor};

pub const OUTPUT_INIT_SCALE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub signal_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub n_frequencies: usize,
}

impl NetConfig {
    pub fn new(signal_dim: usize) -> Self {
        Self {
            signal_dim,
            hidden_width: 256,
            hidden_layers: 3,
            n_frequencies: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("signal_dim", self.signal_dim),
            ("hidden_width", self.hidden_width),
            ("hidden_layers", self.hidden_layers),
            ("n_frequencies", self.n_frequencies),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::contract(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        2 * self.signal_dim + 4 * self.n_frequencies
    }

    /// `(fan_in, fan_out)` of every linear layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_width();
        for _ in 0..self.hidden_layers {
            dims.push((fan_in, self.hidden_width));
            fan_in = self.hidden_width;
        }
        dims.push((fan_in, self.signal_dim));
        dims
    }

    /// Shapes of the trainable tensors: `W_0, b_0, W_1, b_1, ...`.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layer_dims()
            .into_iter()
            .flat_map(|(i, o)| [vec![i, o], vec![1, o]])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Weights `W_i: [fan_in, fan_out]`, biases `b_i: [1, fan_out]` and the
/// embedding frequency table.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: NetConfig,
    frequencies: Tensor,
    tensors: Vec<Tensor>,
}

/// Glorot-uniform weights, zero biases, output layer scaled by [`OUTPUT_INIT_SCALE`].
pub fn init(cfg: NetConfig, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = crate::seeded_rng(seed, crate::stream::INIT);
    let dims = cfg.layer_dims();
    let last = dims.len() - 1;
    let mut tensors = Vec::with_capacity(2 * dims.len());
    for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite positive bound");
        let gain = if i == last { OUTPUT_INIT_SCALE } else { 1.0 };
        let w = (0..fan_in * fan_out).map(|_| gain * dist.sample(&mut rng)).collect();
        tensors.push(Tensor::new(vec![fan_in, fan_out], w)?);
        tensors.push(Tensor::zeros(&[1, fan_out]));
    }
    let frequencies = Tensor::new(vec![1, cfg.n_frequencies], frequencies(cfg.n_frequencies))?;
    Ok(ModelParams {
        config: cfg,
        frequencies,
        tensors,
    })
}

impl ModelParams {
    /// Assembles parameters from parts, checking the dimension chain.
    pub fn from_parts(config: NetConfig, frequencies: Tensor, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        if frequencies.shape() != [1, config.n_frequencies] {
            return Err(Error::shape(format!(
                "frequency table {:?}, expected [1, {}]",
                frequencies.shape(),
                config.n_frequencies
            )));
        }
        let shapes = config.param_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::shape(format!(
                "{} parameter tensors, expected {}",
                tensors.len(),
                shapes.len()
            )));
        }
        for (i, (t, s)) in tensors.iter().zip(&shapes).enumerate() {
            if t.shape() != s.as_slice() {
                return Err(Error::shape(format!("tensor {i} is {:?}, expected {s:?}", t.shape())));
            }
        }
        if !frequencies.is_finite() || tensors.iter().any(|t| !t.is_finite()) {
            return Err(Error::NumericOverflow("model parameters".into()));
        }
        Ok(Self {
            config,
            frequencies,
            tensors,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn frequencies(&self) -> &Tensor {
        &self.frequencies
    }

    /// Trainable tensors in declaration order.
    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Sets every output-layer weight and bias to zero.
    pub fn zero_output_layer(&mut self) {
        let n = self.tensors.len();
        for t in &mut self.tensors[n - 2..] {
            *t = Tensor::zeros(t.shape());
        }
    }

    /// Network body on `[B, D]` signals and `[B, 1]` times.
    ///
    /// `weights` are the trainable tensors lifted into the kernel, in the
    /// order of [`ModelParams::tensors`].
    pub fn forward_with<K: Kernel>(
        &self,
        k: &mut K,
        weights: &[K::Value],
        x: &K::Value,
        t1: &K::Value,
        t2: &K::Value,
        y: &K::Value,
    ) -> K::Value {
        let angular = k.constant(self.frequencies.scale(TAU));
        let e1 = self.embed_with(k, &angular, t1);
        let e2 = self.embed_with(k, &angular, t2);
        let mut h = k.concat_cols(&[x, y, &e1, &e2]);
        let batch = k.primal(&h).rows();
        let layers = weights.len() / 2;
        for (i, pair) in weights.chunks(2).enumerate() {
            let z = k.matmul(&h, &pair[0]);
            let b = k.broadcast_rows(&pair[1], batch);
            let z = k.add(&z, &b);
            h = if i + 1 < layers { k.silu(&z) } else { z };
        }
        h
    }

    fn embed_with<K: Kernel>(&self, k: &mut K, angular: &K::Value, t: &K::Value) -> K::Value {
        let phase = k.matmul(t, angular);
        let s = k.sin(&phase);
        let c = k.cos(&phase);
        k.concat_cols(&[&s, &c])
    }

    /// Checks a signal batch and returns it as a `[B, D]` matrix.
    pub fn as_batch(&self, x: &Tensor) -> Result<Tensor> {
        let d = self.config.signal_dim;
        match x.shape() {
            [n] if *n == d => x.reshape(&[1, d]),
            [_, n] if *n == d => Ok(x.clone()),
            s => Err(Error::contract(format!("signal of shape {s:?}, network expects width {d}"))),
        }
    }

    /// `u(x, t1, t2, y)` on a `[D]` vector or a `[B, D]` batch.
    pub fn forward(&self, x: &Tensor, t1: f64, t2: f64, y: &Tensor) -> Result<Tensor> {
        check_times(t1, t2)?;
        let xb = self.as_batch(x)?;
        let yb = self.as_batch(y)?;
        if xb.rows() != yb.rows() {
            return Err(Error::contract(format!(
                "x has {} rows, y has {}",
                xb.rows(),
                yb.rows()
            )));
        }
        let b = xb.rows();
        let out = self.forward_with(
            &mut Eager,
            &self.tensors,
            &xb,
            &Tensor::full(&[b, 1], t1),
            &Tensor::full(&[b, 1], t2),
            &yb,
        );
        if x.rank() == 1 {
            out.reshape(x.shape())
        } else {
            Ok(out)
        }
    }
}

fn check_times(t1: f64, t2: f64) -> Result<()> {
    if 0.0 <= t2 && t2 <= t1 && t1 <= 1.0 {
        Ok(())
    } else {
        Err(Error::contract(format!("network times need 0 <= t2 <= t1 <= 1, got {t1}, {t2}")))
    }
}

impl VelocityModel for ModelParams {
    fn average_velocity(&self, x: &Tensor, t1: f64, t2: f64, y: &Tensor) -> Result<Tensor> {
        self.forward(x, t1, t2, y)
    }
}
