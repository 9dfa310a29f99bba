//! Ranking and regression metrics.

use crate::error::{Error, Result};

pub const DEFAULT_PRECISION: f64 = 0.9;

fn check(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension { op: "metric", left: (scores.len(), 1), right: (labels.len(), 1) });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("metric over zero samples".into()));
    }
    Ok(())
}

/// Cumulative (true positive, predicted positive) counts at each distinct
/// score threshold, descending; tied scores enter together.
fn threshold_counts(scores: &[f64], labels: &[f64]) -> Result<(Vec<(usize, usize)>, usize)> {
    check(scores, labels)?;
    if let Some(l) = labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        return Err(Error::TaskMismatch(format!("binary metric got label {l}")));
    }
    let positives = labels.iter().filter(|&&l| l == 1.0).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric("no positive labels".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut pp) = (0, 0);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            tp += usize::from(labels[idx[i]] == 1.0);
            pp += 1;
            i += 1;
        }
        out.push((tp, pp));
    }
    Ok((out, positives))
}

/// Step-curve area under precision-recall: Σ (Rₖ − Rₖ₋₁)·Pₖ over
/// descending distinct thresholds.
pub fn auprc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let (counts, positives) = threshold_counts(scores, labels)?;
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (tp, pp) in counts {
        let recall = tp as f64 / positives as f64;
        area += (recall - prev_recall) * (tp as f64 / pp as f64);
        prev_recall = recall;
    }
    Ok(area)
}

/// Largest recall over threshold cuts whose precision is at least `p`;
/// 0 when no cut qualifies.
pub fn recall_at_precision(scores: &[f64], labels: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("target precision {p} outside (0, 1]")));
    }
    let (counts, positives) = threshold_counts(scores, labels)?;
    Ok(counts
        .into_iter()
        .filter(|&(tp, pp)| tp as f64 >= p * pp as f64)
        .map(|(tp, _)| tp as f64 / positives as f64)
        .fold(0.0, f64::max))
}

pub fn rmse(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    check(predictions, labels)?;
    let sum: f64 = predictions.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((sum / labels.len() as f64).sqrt())
}

/// Mean of |y − ŷ| / ((y + ŷ) / 2); pairs with y = ŷ = 0 contribute 0.
pub fn smape(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    check(predictions, labels)?;
    let mut sum = 0.0;
    for (&p, &y) in predictions.iter().zip(labels) {
        if p == 0.0 && y == 0.0 {
            continue;
        }
        let denom = y + p;
        if denom <= 0.0 {
            return Err(Error::MetricDomain(format!("y + ŷ = {denom} for y = {y}, ŷ = {p}")));
        }
        sum += (p - y).abs() / (denom / 2.0);
    }
    Ok(sum / labels.len() as f64)
}
