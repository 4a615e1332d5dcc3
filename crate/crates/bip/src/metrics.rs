//! Selection and prediction scoring: false negative/positive rates,
//! F-measure, Mann-Whitney AUC, and test mean squared error.

use nalgebra::DMatrix;

/// Per-view selection quality, all on a 0..100 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub fnr: f64,
    pub fpr: f64,
    pub f_measure: f64,
    pub selected: Vec<bool>,
}

/// A feature is selected when any component's feature MPP exceeds the
/// threshold (0.5 in the reference workflow).
pub fn select_features(mpp_eta: &DMatrix<f64>, threshold: f64) -> Vec<bool> {
    (0..mpp_eta.ncols())
        .map(|j| (0..mpp_eta.nrows()).any(|l| mpp_eta[(l, j)] > threshold))
        .collect()
}

/// Confusion-count scores of a selected set against the true signal set.
/// FNR and FPR are percentages of the truth and non-truth sets; F is the
/// percentage harmonic mean of precision and recall (0 when degenerate).
pub fn selection_scores(selected: &[bool], truth: &[bool]) -> SelectionReport {
    assert_eq!(selected.len(), truth.len(), "selection/truth length mismatch");
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    for (&s, &t) in selected.iter().zip(truth) {
        match (s, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let n_true = tp + fn_;
    let n_false = fp + tn;
    let fnr = if n_true == 0 {
        0.0
    } else {
        100.0 * fn_ as f64 / n_true as f64
    };
    let fpr = if n_false == 0 {
        0.0
    } else {
        100.0 * fp as f64 / n_false as f64
    };
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if n_true == 0 { 0.0 } else { tp as f64 / n_true as f64 };
    let f_measure = if precision + recall == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * precision * recall / (precision + recall)
    };
    SelectionReport {
        fnr,
        fpr,
        f_measure,
        selected: selected.to_vec(),
    }
}

/// Mann-Whitney AUC with ties contributing one half.
pub fn auc_from_mpp(scores: &[f64], labels: &[bool]) -> f64 {
    assert_eq!(scores.len(), labels.len(), "score/label length mismatch");
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let mut stat = 0.0;
    for (i, (&s_pos, &l_pos)) in scores.iter().zip(labels).enumerate() {
        if !l_pos {
            continue;
        }
        for (j, (&s_neg, &l_neg)) in scores.iter().zip(labels).enumerate() {
            if l_neg || i == j {
                continue;
            }
            stat += if s_pos > s_neg {
                1.0
            } else if s_pos == s_neg {
                0.5
            } else {
                0.0
            };
        }
    }
    stat / (n_pos as f64 * n_neg as f64)
}

/// Mean squared prediction error.
pub fn mse(pred: &[f64], actual: &[f64]) -> f64 {
    assert_eq!(pred.len(), actual.len(), "prediction/actual length mismatch");
    pred.iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / pred.len() as f64
}
