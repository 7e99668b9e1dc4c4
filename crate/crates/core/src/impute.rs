//! Zero-fill and forward-fill imputation, and missingness indicators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Grid, RawEpisode, VariableSpec};
use crate::nn::tensor::Matrix;

/// Median used for a variable that was never observed in training
/// (the scaled mid-range).
pub const UNOBSERVED_MEDIAN: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum ImputeError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("forward fill needs {expected} medians, got {found}")]
    MedianCount { expected: usize, found: usize },
    #[error("no variable spec for variable {0}")]
    MissingSpec(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImputePolicy {
    Zero,
    ForwardFill { medians: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorMode {
    Off,
    On,
    /// Indicator block kept, value block zeroed.
    Only,
}

impl IndicatorMode {
    pub fn width_factor(self) -> usize {
        match self {
            IndicatorMode::Off => 1,
            IndicatorMode::On | IndicatorMode::Only => 2,
        }
    }
}

/// Model input sequence: `T × D` values, optionally followed by `D`
/// indicator columns where column `d + D` is 1 exactly when cell `d` was
/// imputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSequence {
    pub id: String,
    pub inputs: Matrix,
    pub labels: Vec<u8>,
}

impl AugmentedSequence {
    pub fn num_steps(&self) -> usize {
        self.inputs.rows()
    }
}

fn median_of(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Per-variable median over every scaled training measurement.
pub fn compute_medians(
    train: &[RawEpisode],
    specs: &[VariableSpec],
) -> Result<Vec<f64>, ImputeError> {
    if train.is_empty() {
        return Err(ImputeError::EmptyTrainingSet);
    }
    let d = specs.len();
    let mut per_var: Vec<Vec<f64>> = vec![Vec::new(); d];
    for ep in train {
        for o in &ep.observations {
            let spec = specs
                .iter()
                .find(|s| s.variable_index == o.variable)
                .ok_or(ImputeError::MissingSpec(o.variable))?;
            per_var[o.variable].push(spec.scale(o.value));
        }
    }
    Ok(per_var
        .iter_mut()
        .map(|v| median_of(v).unwrap_or(UNOBSERVED_MEDIAN))
        .collect())
}

/// Fills every unobserved cell. The mask and observed cells are unchanged.
pub fn impute(g: &Grid, policy: &ImputePolicy) -> Result<Grid, ImputeError> {
    let mut out = g.clone();
    let (t_len, d) = (g.num_steps(), g.num_vars());
    match policy {
        ImputePolicy::Zero => {
            for (v, &m) in out.values.as_mut_slice().iter_mut().zip(g.mask.as_slice()) {
                if m == 0.0 {
                    *v = 0.0;
                }
            }
        }
        ImputePolicy::ForwardFill { medians } => {
            if medians.len() != d {
                return Err(ImputeError::MedianCount {
                    expected: d,
                    found: medians.len(),
                });
            }
            for (v, &median) in medians.iter().enumerate() {
                let mut carry = median;
                for t in 0..t_len {
                    if g.observed(t, v) {
                        carry = g.values.get(t, v);
                    } else {
                        out.values.set(t, v, carry);
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn augment_with_indicators(g: &Grid, mode: IndicatorMode) -> AugmentedSequence {
    let (t_len, d) = (g.num_steps(), g.num_vars());
    let inputs = match mode {
        IndicatorMode::Off => g.values.clone(),
        IndicatorMode::On | IndicatorMode::Only => {
            let mut m = Matrix::zeros(t_len, 2 * d);
            for t in 0..t_len {
                let row = m.row_mut(t);
                if mode == IndicatorMode::On {
                    row[..d].copy_from_slice(g.values.row(t));
                }
                for (ind, &obs) in row[d..].iter_mut().zip(g.mask.row(t)) {
                    *ind = 1.0 - obs;
                }
            }
            m
        }
    };
    AugmentedSequence {
        id: g.id.clone(),
        inputs,
        labels: g.labels.clone(),
    }
}

/// Linear score of a zero-filled input with indicator features:
/// `z = Σ wᵢ xᵢ + Σ θᵢ mᵢ`.
pub fn linear_substitution_equivalence(w: &[f64], theta: &[f64], x: &[f64], m: &[f64]) -> f64 {
    assert!(w.len() == theta.len() && w.len() == x.len() && w.len() == m.len());
    w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        + theta.iter().zip(m).map(|(a, b)| a * b).sum::<f64>()
}

/// Substitution value `θᵢ / wᵢ` a plain linear model would have to impute to
/// match the indicator weight; `None` where `wᵢ = 0`.
pub fn substitution_values(w: &[f64], theta: &[f64]) -> Vec<Option<f64>> {
    w.iter()
        .zip(theta)
        .map(|(&wi, &ti)| (wi != 0.0).then(|| ti / wi))
        .collect()
}

/// Indicator-free score where each missing coordinate is replaced by its
/// substitution value. `None` if a missing coordinate has no substitute.
pub fn substituted_score(w: &[f64], x: &[f64], m: &[f64], subs: &[Option<f64>]) -> Option<f64> {
    let mut z = 0.0;
    for i in 0..w.len() {
        let xi = if m[i] != 0.0 { subs[i]? } else { x[i] };
        z += w[i] * xi;
    }
    Some(z)
}
