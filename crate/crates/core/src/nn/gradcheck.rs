//! Central finite-difference check of analytic gradients.

use serde::Serialize;

use super::{objective, objective_and_grad, Network};

/// Denominator floor for the relative error, so entries whose true
/// gradient is ~0 are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the gradient of the full objective (mean data loss plus weight
/// decay, dropout off) against `(J(θ + h) − J(θ − h)) / 2h` for every
/// parameter.
pub fn check_gradients<N: Network>(
    model: &N,
    batch: &[(&N::Input, &[u8])],
    weight_decay: f64,
    step: f64,
) -> GradCheckReport {
    let (_, grad) = objective_and_grad(model, batch, weight_decay, None);
    let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|t| t.data.to_vec()).collect();
    let names: Vec<String> = model.tensors().iter().map(|t| t.name.clone()).collect();
    let mut probe = model.clone();
    let mut tensors = Vec::with_capacity(names.len());
    for (ti, name) in names.into_iter().enumerate() {
        let len = analytic[ti].len();
        let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
        for (j, &a) in analytic[ti].iter().enumerate() {
            let orig = probe.tensors_mut()[ti][j];
            probe.tensors_mut()[ti][j] = orig + step;
            let up = objective(&probe, batch, weight_decay);
            probe.tensors_mut()[ti][j] = orig - step;
            let down = objective(&probe, batch, weight_decay);
            probe.tensors_mut()[ti][j] = orig;
            let numeric = (up - down) / (2.0 * step);
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        tensors.push(TensorCheck {
            name,
            entries: len,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    GradCheckReport { step, tensors }
}
