//! Dense models with hand-written reverse-mode gradients.
//!
//! Every model implements [`Parameters`] (flat access to its tensors, used by
//! the optimizer, gradient clipping and the finite-difference checker) and
//! [`Network`] (per-example loss, gradient and prediction).

pub mod feedforward;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod tensor;
pub mod train;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use feedforward::{Dense, LinearModel, MlpModel};
pub use lstm::{LstmLayerParams, LstmModel};
pub use train::{train, Example, TrainConfig, TrainError, TrainOutcome};

/// A named parameter tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub data: &'a [f64],
    /// Subject to weight decay (weights yes, biases no).
    pub decay: bool,
}

pub trait Parameters: Clone {
    fn tensors(&self) -> Vec<TensorRef<'_>>;
    /// Same order as [`Parameters::tensors`].
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum()
    }

    /// `Σ w²` over decayed tensors only.
    fn decayed_squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .filter(|t| t.decay)
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - p)`.
pub struct Dropout<'a> {
    pub p: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    pub fn sample_mask(&mut self, n: usize) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.p);
        (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < self.p {
                    0.0
                } else {
                    keep
                }
            })
            .collect()
    }
}

pub trait Network: Parameters {
    type Input;

    /// Data loss for one example. Adds `scale * ∂loss/∂θ` into `grad`.
    fn loss_and_grad(
        &self,
        input: &Self::Input,
        labels: &[u8],
        dropout: Option<&mut Dropout<'_>>,
        grad: &mut Self,
        scale: f64,
    ) -> f64;

    /// Data loss at inference (no dropout).
    fn loss(&self, input: &Self::Input, labels: &[u8]) -> f64;

    /// Label probabilities in `(0, 1)`.
    fn predict(&self, input: &Self::Input) -> Vec<f64>;

    fn num_labels(&self) -> usize;

    /// Weight decay actually applied; models with their own penalty override.
    fn decay_coefficient(&self, configured: f64) -> f64 {
        configured
    }
}

/// Mean data loss plus `(λ/2) Σ w²`, and its gradient.
pub fn objective_and_grad<N: Network>(
    model: &N,
    batch: &[(&N::Input, &[u8])],
    weight_decay: f64,
    mut dropout: Option<&mut Dropout<'_>>,
) -> (f64, N) {
    let mut grad = model.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (x, y) in batch {
        loss += model.loss_and_grad(x, y, dropout.as_deref_mut(), &mut grad, scale);
    }
    loss *= scale;
    let lambda = model.decay_coefficient(weight_decay);
    if lambda != 0.0 {
        loss += 0.5 * lambda * model.decayed_squared_norm();
        let decays: Vec<bool> = model.tensors().iter().map(|t| t.decay).collect();
        let params: Vec<Vec<f64>> = model.tensors().iter().map(|t| t.data.to_vec()).collect();
        for ((g, p), decay) in grad.tensors_mut().into_iter().zip(&params).zip(decays) {
            if decay {
                tensor::axpy(lambda, p, g);
            }
        }
    }
    (loss, grad)
}

/// Objective without gradient; inference mode.
pub fn objective<N: Network>(model: &N, batch: &[(&N::Input, &[u8])], weight_decay: f64) -> f64 {
    let data: f64 = batch.iter().map(|(x, y)| model.loss(x, y)).sum::<f64>() / batch.len() as f64;
    data + 0.5 * model.decay_coefficient(weight_decay) * model.decayed_squared_norm()
}

/// Uniform initialisation in `±1/√fan_in`.
pub(crate) fn uniform_init(rng: &mut ChaCha8Rng, data: &mut [f64], fan_in: usize) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in data {
        *v = rng.gen_range(-bound..=bound);
    }
}
