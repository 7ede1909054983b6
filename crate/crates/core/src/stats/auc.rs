use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::rank::average_ranks;

/// Scores paired with binary labels.
#[derive(Debug, Clone, Copy)]
pub struct BinaryScoredSample<'a, T> {
    pub scores: &'a [T],
    pub labels: &'a [bool],
}

impl<'a, T> BinaryScoredSample<'a, T> {
    pub fn new(scores: &'a [T], labels: &'a [bool]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: scores.len(),
                right: labels.len(),
            });
        }
        Ok(Self { scores, labels })
    }
}

/// ROC AUC via the Mann-Whitney statistic; tied scores count one half.
pub fn roc_auc<T: Scalar>(sample: BinaryScoredSample<'_, T>) -> Result<T> {
    let pos = sample.labels.iter().filter(|&&l| l).count();
    let neg = sample.labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate(format!(
            "roc_auc needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    if sample.scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("roc_auc scores contain NaN".into()));
    }
    let ranks = average_ranks(sample.scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(sample.labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r.f64())
        .sum();
    let p = pos as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(T::of(u / (p * neg as f64)))
}
