//! Small neural-network toolkit: dense and convolutional layers with
//! hand-written backpropagation, Adam, and a binary checkpoint format.
//!
//! Every model keeps its parameters in one flat vector. Optimizers,
//! checkpoints and finite-difference checks all operate on that vector.

pub mod checkpoint;
pub mod mlp;
pub mod qnet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{dot, sigmoid, Scalar};

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_FORMAT, KIND_MLP, KIND_Q_MODEL};
pub use mlp::{fit, mean_loss, train_mlp, Dataset, Loss, MlpCache, MlpModel, TrainConfig, TrainOutcome};
pub use qnet::{ConvSpec, QNet, QNetAdam, QNetCache, QNetConfig, SharedFeatures};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(T::zero()),
            Activation::LeakyRelu => {
                if z > T::zero() {
                    z
                } else {
                    z * T::of(LEAKY_SLOPE)
                }
            }
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative given the pre-activation `z` and the output `a`.
    #[inline]
    pub fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::of(LEAKY_SLOPE)
                }
            }
            Activation::Sigmoid => a * (T::one() - a),
        }
    }

    fn rectifier(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu)
    }
}

/// Uniform initialization bound: He for rectifiers, Glorot otherwise.
pub(crate) fn init_bound(fan_in: usize, fan_out: usize, act: Activation) -> f64 {
    if act.rectifier() {
        (6.0 / fan_in as f64).sqrt()
    } else {
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    }
}

pub(crate) fn fill_uniform<T: Scalar, R: Rng + ?Sized>(out: &mut [T], bound: f64, rng: &mut R) {
    for w in out {
        *w = T::of(rng.random_range(-bound..=bound));
    }
}

/// `y = W x + b` with `W` stored row-major as `out x in`.
#[inline]
pub(crate) fn dense_forward<T: Scalar>(w: &[T], b: &[T], x: &[T], y: &mut [T]) {
    let n_in = x.len();
    for (o, yo) in y.iter_mut().enumerate() {
        *yo = dot(&w[o * n_in..(o + 1) * n_in], x) + b[o];
    }
}

/// Accumulates `dW += dy x^T`, `db += dy` and, when requested,
/// `dx = W^T dy`.
#[inline]
pub(crate) fn dense_backward<T: Scalar>(
    w: &[T],
    x: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    let n_in = x.len();
    for (o, &g) in dy.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        db[o] += g;
        let row = &mut dw[o * n_in..(o + 1) * n_in];
        for (r, &xi) in row.iter_mut().zip(x) {
            *r += g * xi;
        }
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = T::zero());
        for (o, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            let row = &w[o * n_in..(o + 1) * n_in];
            for (d, &wi) in dx.iter_mut().zip(row) {
                *d += g * wi;
            }
        }
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr: T::of(lr),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            m: vec![T::zero(); param_count],
            v: vec![T::zero(); param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Rescales `grads` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [T], max_norm: T) -> T {
    let norm = dot(grads, grads).sqrt();
    if norm > max_norm && norm > T::zero() {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
