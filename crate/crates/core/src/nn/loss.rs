//! Mean binary cross-entropy and the target-replication objective.

/// Clipping applied to predictions inside the loss only.
pub const PROB_EPS: f64 = 1e-12;

/// Mean binary cross-entropy over the labels.
pub fn log_loss(pred: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(pred.len(), labels.len());
    let k = pred.len() as f64;
    pred.iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / k
}

/// Gradient of [`log_loss`] with respect to the pre-sigmoid logits,
/// scaled by `weight`. Zero where the prediction sits in the clipped region.
pub fn log_loss_logit_grad(pred: &[f64], labels: &[u8], weight: f64, out: &mut [f64]) {
    let k = pred.len() as f64;
    for ((o, &p), &y) in out.iter_mut().zip(pred).zip(labels) {
        *o = if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
            weight * (p - y as f64) / k
        } else {
            0.0
        };
    }
}

/// Weight of step `t` (0-based) of `steps` in the replicated loss.
#[inline]
pub fn replication_weight(t: usize, steps: usize, alpha: f64) -> f64 {
    let w = alpha / steps as f64;
    if t + 1 == steps {
        w + (1.0 - alpha)
    } else {
        w
    }
}

/// `α · mean_t loss_t + (1 − α) · loss_T` given the per-step losses.
pub fn replicated_loss_from_steps(step_losses: &[f64], alpha: f64) -> f64 {
    assert!(!step_losses.is_empty());
    assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
    let mean = step_losses.iter().sum::<f64>() / step_losses.len() as f64;
    alpha * mean + (1.0 - alpha) * step_losses[step_losses.len() - 1]
}

/// Replicated loss of per-step predictions against static labels.
pub fn replicated_loss(preds: &[Vec<f64>], labels: &[u8], alpha: f64) -> f64 {
    let steps: Vec<f64> = preds.iter().map(|p| log_loss(p, labels)).collect();
    replicated_loss_from_steps(&steps, alpha)
}
