//! Evaluation metrics: ROC curves, AUC, accuracy and information-gain
//! feature ranking.
//!
//! The AUC is computed from integer concordance counts over distinct-score
//! groups (ties weighted 0.5), which is exactly the trapezoidal area under
//! the ROC points — but free of floating-point accumulation, so it equals
//! brute-force pairwise counting bit for bit.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::FeatureMatrix;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need both classes to sweep a ROC curve")]
    SingleClass,
    #[error("scores ({scores}) and labels ({labels}) differ in length")]
    LengthMismatch { scores: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocCurve {
    /// Sweep from `(0,0)` (threshold above every score) to `(1,1)`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// CSV export: `threshold,fpr,tpr`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "threshold,fpr,tpr")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
        }
        Ok(())
    }
}

/// ROC curve over the distinct observed scores, predicted positive at
/// `score >= threshold`. The AUC equals the probability that a random
/// positive outranks a random negative, ties counted half.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    let pos_total = labels.iter().filter(|&&l| l).count() as u64;
    let neg_total = labels.len() as u64 - pos_total;
    if pos_total == 0 || neg_total == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let mut tp = 0u64;
    let mut fp = 0u64;
    // doubled concordance count: 2 per win, 1 per tie
    let mut concordance_x2: u128 = 0;

    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        let mut group_pos = 0u64;
        let mut group_neg = 0u64;
        while i < order.len() && scores[order[i]] == score {
            if labels[order[i]] {
                group_pos += 1;
            } else {
                group_neg += 1;
            }
            i += 1;
        }
        // positives strictly above this group beat its negatives; the
        // group's own positives tie them
        concordance_x2 += 2 * (tp as u128) * (group_neg as u128);
        concordance_x2 += (group_pos as u128) * (group_neg as u128);
        tp += group_pos;
        fp += group_neg;
        points.push(RocPoint {
            threshold: score,
            fpr: fp as f64 / neg_total as f64,
            tpr: tp as f64 / pos_total as f64,
        });
    }

    let auc = concordance_x2 as f64 / (2.0 * pos_total as f64 * neg_total as f64);
    Ok(RocCurve { points, auc })
}

/// Fraction of rows whose thresholded score matches the label; predicted
/// positive at `score > threshold` (strictly), so threshold 1.0 predicts
/// everything negative.
pub fn accuracy(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    assert_eq!(scores.len(), labels.len());
    assert!(!scores.is_empty(), "accuracy of an empty prediction set");
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|&(&s, &l)| (s > threshold) == l)
        .count();
    correct as f64 / scores.len() as f64
}

pub const INFO_GAIN_BINS: usize = 10;

/// Information gain of each feature about the label, features ranked
/// descending (ties by feature index). Continuous features are discretized
/// into `bins` equal-frequency bins.
pub fn info_gain(matrix: &FeatureMatrix, labels: &[bool], bins: usize) -> Vec<(usize, f64)> {
    assert_eq!(matrix.n_rows(), labels.len());
    let n = labels.len();
    if n == 0 {
        return Vec::new();
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let h_label = entropy(pos, n);

    let columns = matrix.to_columns();
    let mut gains: Vec<(usize, f64)> = Vec::with_capacity(matrix.n_features);
    let mut values = vec![0.0f64; n];
    for (f, col) in columns.iter().enumerate() {
        values.iter_mut().for_each(|v| *v = 0.0);
        for &(row, v) in col {
            values[row as usize] = v;
        }
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // internal equal-frequency edges, deduplicated
        let mut edges: Vec<f64> = (1..bins).map(|i| sorted[i * n / bins]).collect();
        edges.dedup();

        // per-bin label counts: bin = number of edges < value
        let mut bin_tot = vec![0usize; edges.len() + 1];
        let mut bin_pos = vec![0usize; edges.len() + 1];
        for (row, &v) in values.iter().enumerate() {
            let b = edges.partition_point(|&e| e < v);
            bin_tot[b] += 1;
            if labels[row] {
                bin_pos[b] += 1;
            }
        }
        let h_cond: f64 = bin_tot
            .iter()
            .zip(&bin_pos)
            .filter(|&(&t, _)| t > 0)
            .map(|(&t, &p)| t as f64 / n as f64 * entropy(p, t))
            .sum();
        gains.push((f, h_label - h_cond));
    }
    gains.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    gains
}

fn entropy(pos: usize, tot: usize) -> f64 {
    if tot == 0 {
        return 0.0;
    }
    let p = pos as f64 / tot as f64;
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.log2();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).log2();
    }
    h
}
