use crate::error::{Error, Result};
use crate::stats::fractional_ranks;

/// Area under the ROC curve via the Mann-Whitney statistic with midranks.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: positive.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("non-finite score"));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("auroc needs both classes"));
    }
    let ranks = fractional_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Coefficient of determination 1 − SS_res / SS_tot.
pub fn r2(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("r2 of a constant target"));
    }
    let ss_res: f64 = predicted.iter().zip(truth).map(|(p, y)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
