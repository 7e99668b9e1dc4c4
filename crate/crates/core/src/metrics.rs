//! Multilabel evaluation: rank-statistic AUC (micro and macro), F1 with
//! validation-chosen thresholds, and precision at 10.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::tensor::Matrix;

/// Threshold used for a label with no validation positives.
pub const FALLBACK_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("precision@10 needs at least 10 labels, got {0}")]
    TooFewLabels(usize),
    #[error("score and label matrices differ in shape")]
    Shape,
}

/// Area under the ROC curve via the Mann-Whitney rank sum with average
/// ranks for ties. `None` when only one class is present.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        pos_rank_sum += avg * pos_in_tie as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

fn label_column(labels: &[Vec<u8>], k: usize) -> Vec<u8> {
    labels.iter().map(|row| row[k]).collect()
}

/// `(micro, macro)`; NaN where undefined. Macro averages the labels whose
/// AUC is defined.
pub fn micro_macro_auc(scores: &Matrix, labels: &[Vec<u8>]) -> (f64, f64) {
    assert_eq!(scores.rows(), labels.len());
    let flat_labels: Vec<u8> = labels.iter().flatten().copied().collect();
    let micro = roc_auc(scores.as_slice(), &flat_labels).unwrap_or(f64::NAN);
    let per_label: Vec<f64> = (0..scores.cols())
        .filter_map(|k| roc_auc(&scores.column(k), &label_column(labels, k)))
        .collect();
    let macro_ = if per_label.is_empty() {
        f64::NAN
    } else {
        per_label.iter().sum::<f64>() / per_label.len() as f64
    };
    (micro, macro_)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            // nothing to find and nothing predicted
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Counts {
    let mut c = Counts::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

/// Threshold maximizing F1 for one label. Candidates are the lowest score
/// (everything positive) and the midpoints between consecutive distinct
/// scores; ties go to the lower threshold.
pub fn best_threshold(scores: &[f64], labels: &[u8]) -> f64 {
    if !labels.contains(&1) {
        return FALLBACK_THRESHOLD;
    }
    let mut uniq = scores.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let candidates = std::iter::once(uniq[0]).chain(uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let mut best = (f64::NEG_INFINITY, FALLBACK_THRESHOLD);
    for th in candidates {
        let f1 = confusion(scores, labels, th).f1();
        if f1 > best.0 {
            best = (f1, th);
        }
    }
    best.1
}

pub fn select_thresholds(val_scores: &Matrix, val_labels: &[Vec<u8>]) -> Vec<f64> {
    assert!(val_scores.rows() > 0, "validation set must be nonempty");
    (0..val_scores.cols())
        .map(|k| best_threshold(&val_scores.column(k), &label_column(val_labels, k)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_: f64,
    pub per_label: Vec<f64>,
}

pub fn f1_scores(scores: &Matrix, labels: &[Vec<u8>], thresholds: &[f64]) -> F1Scores {
    assert_eq!(thresholds.len(), scores.cols());
    let per_counts: Vec<Counts> = (0..scores.cols())
        .map(|k| confusion(&scores.column(k), &label_column(labels, k), thresholds[k]))
        .collect();
    let pooled = per_counts.iter().fold(Counts::default(), |a, c| Counts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
    });
    let per_label: Vec<f64> = per_counts.iter().map(Counts::f1).collect();
    F1Scores {
        micro: pooled.f1(),
        macro_: per_label.iter().sum::<f64>() / per_label.len() as f64,
        per_label,
    }
}

/// Mean fraction of true labels among each row's ten highest scores. Ties
/// rank the lower label index first.
pub fn precision_at_10(scores: &Matrix, labels: &[Vec<u8>]) -> Result<f64, MetricsError> {
    const TOP: usize = 10;
    if scores.cols() < TOP {
        return Err(MetricsError::TooFewLabels(scores.cols()));
    }
    if scores.rows() != labels.len() {
        return Err(MetricsError::Shape);
    }
    let mut total = 0.0;
    for (r, y) in labels.iter().enumerate() {
        let row = scores.row(r);
        let mut idx: Vec<usize> = (0..row.len()).collect();
        // stable sort keeps ascending index order among equal scores
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        total += idx[..TOP].iter().filter(|&&k| y[k] == 1).count() as f64 / TOP as f64;
    }
    Ok(total / labels.len() as f64)
}

/// Serializes NaN as JSON `null` and back.
pub mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub label: usize,
    pub base_rate: f64,
    #[serde(with = "nan_as_null")]
    pub auc: f64,
    pub f1: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(with = "nan_as_null")]
    pub micro_auc: f64,
    #[serde(with = "nan_as_null")]
    pub macro_auc: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// `None` with fewer than 10 labels.
    pub precision_at_10: Option<f64>,
    pub per_label: Vec<LabelReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-label table: condition, base rate, AUC, F1, threshold.
    pub fn per_label_csv(&self, names: Option<&[String]>) -> String {
        let mut out = String::from("condition,base_rate,auc,f1,threshold\n");
        for r in &self.per_label {
            let name = names
                .and_then(|n| n.get(r.label).cloned())
                .unwrap_or_else(|| format!("label{}", r.label));
            let auc = if r.auc.is_nan() {
                "n/a".to_string()
            } else {
                format!("{:.4}", r.auc)
            };
            out.push_str(&format!(
                "{name},{:.4},{auc},{:.4},{:.4}\n",
                r.base_rate, r.f1, r.threshold
            ));
        }
        out
    }
}

/// Full report: thresholds come from validation scores, everything else
/// from test scores.
pub fn evaluate(
    test_scores: &Matrix,
    test_labels: &[Vec<u8>],
    val_scores: &Matrix,
    val_labels: &[Vec<u8>],
) -> EvalReport {
    let thresholds = select_thresholds(val_scores, val_labels);
    let (micro_auc, macro_auc) = micro_macro_auc(test_scores, test_labels);
    let f1 = f1_scores(test_scores, test_labels, &thresholds);
    let n = test_labels.len() as f64;
    let per_label = (0..test_scores.cols())
        .map(|k| {
            let col = label_column(test_labels, k);
            LabelReport {
                label: k,
                base_rate: col.iter().map(|&v| v as f64).sum::<f64>() / n,
                auc: roc_auc(&test_scores.column(k), &col).unwrap_or(f64::NAN),
                f1: f1.per_label[k],
                threshold: thresholds[k],
            }
        })
        .collect();
    EvalReport {
        micro_auc,
        macro_auc,
        micro_f1: f1.micro,
        macro_f1: f1.macro_,
        precision_at_10: precision_at_10(test_scores, test_labels).ok(),
        per_label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Probability a random positive outranks a random negative, by pairs.
    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        (pairs > 0.0).then(|| wins / pairs)
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[1, 0]), Some(1.0));
        assert_eq!(roc_auc(&[0.3, 0.3, 0.3, 0.3], &[1, 0, 1, 0]), Some(0.5));
        assert_eq!(roc_auc(&[0.8, 0.5, 0.3], &[1, 0, 1]), Some(0.5));
        assert_eq!(pairwise_auc(&[0.8, 0.5, 0.3], &[1, 0, 1]), Some(0.5));
        assert_eq!(roc_auc(&[0.1, 0.2], &[1, 1]), None);
    }

    #[test]
    fn micro_macro_degenerate_cases() {
        let scores = Matrix::from_vec(4, 1, vec![0.9, 0.2, 0.6, 0.4]);
        let labels = vec![vec![1], vec![0], vec![0], vec![1]];
        let (mi, ma) = micro_macro_auc(&scores, &labels);
        assert_eq!(mi, ma);
        assert_eq!(Some(mi), roc_auc(&scores.column(0), &[1, 0, 0, 1]));

        let constant = Matrix::from_vec(4, 2, vec![0.3; 8]);
        let labels = vec![vec![1, 0], vec![0, 1], vec![0, 0], vec![1, 1]];
        assert_eq!(micro_macro_auc(&constant, &labels).1, 0.5);

        // single-class label is excluded from the macro average
        let scores = Matrix::from_vec(3, 2, vec![0.9, 0.1, 0.2, 0.5, 0.4, 0.7]);
        let labels = vec![vec![1, 0], vec![0, 0], vec![1, 0]];
        let (_, ma) = micro_macro_auc(&scores, &labels);
        assert_eq!(ma, 1.0);
    }

    #[test]
    fn thresholds_separable_and_fallback() {
        assert_eq!(best_threshold(&[0.2, 0.8], &[0, 1]), 0.5);
        assert_eq!(confusion(&[0.2, 0.8], &[0, 1], 0.5).f1(), 1.0);
        assert_eq!(
            best_threshold(&[0.2, 0.8, 0.4], &[0, 0, 0]),
            FALLBACK_THRESHOLD
        );
        // all positives: predicting everything positive is optimal
        assert_eq!(best_threshold(&[0.2, 0.8], &[1, 1]), 0.2);
    }

    #[test]
    fn f1_pooling() {
        // label 0: TP 1 FP 1; label 1: TP 2 FN 1; label 2: FP 1 FN 1
        let scores = Matrix::from_rows(&[
            vec![0.9, 0.9, 0.9],
            vec![0.9, 0.9, 0.1],
            vec![0.1, 0.1, 0.1],
            vec![0.1, 0.1, 0.1],
        ]);
        let labels = vec![vec![1, 1, 0], vec![0, 1, 1], vec![0, 1, 0], vec![0, 0, 0]];
        let f = f1_scores(&scores, &labels, &[0.5; 3]);
        assert!((f.micro - 0.6).abs() < 1e-15);
        assert!((f.per_label[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((f.per_label[1] - 0.8).abs() < 1e-15);
        assert_eq!(f.per_label[2], 0.0);

        let perfect = f1_scores(
            &Matrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]),
            &[vec![1, 0], vec![0, 1]],
            &[0.5; 2],
        );
        assert_eq!((perfect.micro, perfect.macro_), (1.0, 1.0));
        let none = f1_scores(
            &Matrix::from_rows(&[vec![0.1, 0.1]]),
            &[vec![1, 1]],
            &[0.5; 2],
        );
        assert_eq!((none.micro, none.macro_), (0.0, 0.0));
    }

    #[test]
    fn precision_at_ten() {
        let mut row = vec![0.0; 12];
        row[3] = 0.9;
        row[7] = 0.8;
        let mut y = vec![0u8; 12];
        y[3] = 1;
        y[7] = 1;
        let scores = Matrix::from_vec(1, 12, row.clone());
        assert!((precision_at_10(&scores, &[y.clone()]).unwrap() - 0.2).abs() < 1e-15);

        // true labels at the two lowest-ranked slots, ties broken by index
        let mut y2 = vec![0u8; 12];
        y2[10] = 1;
        y2[11] = 1;
        assert_eq!(precision_at_10(&scores, &[y2]).unwrap(), 0.0);

        let small = Matrix::zeros(1, 9);
        assert_eq!(
            precision_at_10(&small, &[vec![0; 9]]),
            Err(MetricsError::TooFewLabels(9))
        );
    }

    #[test]
    fn report_json_handles_nan() {
        let r = EvalReport {
            micro_auc: f64::NAN,
            macro_auc: 0.5,
            micro_f1: 0.0,
            macro_f1: 0.0,
            precision_at_10: None,
            per_label: vec![],
        };
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert!(back.micro_auc.is_nan());
        assert_eq!(back.macro_auc, 0.5);
    }
}
