//! Mini-batch SGD with momentum, dropout, weight decay, gradient clipping
//! and best-validation checkpointing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{objective, objective_and_grad, Dropout, Network, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Non-recurrent dropout probability.
    pub dropout: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Target-replication weight for sequence models.
    pub alpha: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.1,
            momentum: 0.9,
            dropout: 0.5,
            weight_decay: 1e-6,
            batch_size: 16,
            seed: 0,
            alpha: 0.5,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.weight_decay < 0.0 {
            return bad("weight decay must be non-negative");
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return bad("clip norm must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (learning rate {learning_rate}); \
         try a smaller learning rate or a tighter clip norm"
    )]
    NonFinite {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example<X> {
    pub input: X,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Objective over the training set at the end of the epoch, dropout off.
    pub train_loss: f64,
    /// Data loss over the validation set, dropout off.
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<N> {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: N,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    pub history: Vec<EpochRecord>,
}

fn pairs<X>(data: &[Example<X>]) -> Vec<(&X, &[u8])> {
    data.iter()
        .map(|e| (&e.input, e.labels.as_slice()))
        .collect()
}

/// Momentum step: `v ← μ v − η g`, `w ← w + v`.
fn apply_update<N: Parameters>(model: &mut N, velocity: &mut N, grad: &N, lr: f64, momentum: f64) {
    let grads = grad.tensors();
    for ((w, v), g) in model
        .tensors_mut()
        .into_iter()
        .zip(velocity.tensors_mut())
        .zip(grads.iter())
    {
        for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(g.data) {
            *vi = momentum * *vi - lr * gi;
            *wi += *vi;
        }
    }
}

/// Rescales `grad` so its global norm is at most `max_norm`.
pub fn clip_global_norm<N: Parameters>(grad: &mut N, max_norm: f64) -> f64 {
    let norm = grad.squared_norm().sqrt();
    if norm > max_norm {
        grad.scale(max_norm / norm);
    }
    norm
}

pub fn train<N: Network>(
    mut model: N,
    train_set: &[Example<N::Input>],
    val_set: &[Example<N::Input>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<N>, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptyValidationSet);
    }
    let train_pairs = pairs(train_set);
    let val_pairs = pairs(val_set);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = model.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let initial_train_loss = objective(&model, &train_pairs, cfg.weight_decay);
    let initial_val_loss = objective(&model, &val_pairs, 0.0);
    let mut best = (model.clone(), 0usize, f64::INFINITY);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&N::Input, &[u8])> = chunk.iter().map(|&i| train_pairs[i]).collect();
            let mut dropout = (cfg.dropout > 0.0).then_some(Dropout {
                p: cfg.dropout,
                rng: &mut rng,
            });
            let (loss, mut grad) =
                objective_and_grad(&model, &batch, cfg.weight_decay, dropout.as_mut());
            if !loss.is_finite() || !grad.all_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    learning_rate: cfg.learning_rate,
                });
            }
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grad, c);
            }
            apply_update(
                &mut model,
                &mut velocity,
                &grad,
                cfg.learning_rate,
                cfg.momentum,
            );
        }
        let train_loss = objective(&model, &train_pairs, cfg.weight_decay);
        let val_loss = objective(&model, &val_pairs, 0.0);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
                learning_rate: cfg.learning_rate,
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.2 {
            best = (model.clone(), epoch, val_loss);
        }
    }

    Ok(TrainOutcome {
        model: best.0,
        best_epoch: best.1,
        best_val_loss: best.2,
        initial_train_loss,
        initial_val_loss,
        history,
    })
}
