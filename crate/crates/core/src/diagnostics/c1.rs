use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::{kendall_tau, spearman, PairedSample, RankCorrelation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct C1Thresholds {
    pub min_rho: f64,
    pub max_p: f64,
}

impl Default for C1Thresholds {
    fn default() -> Self {
        Self {
            min_rho: 0.0,
            max_p: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct C1Report<T> {
    pub n: usize,
    pub spearman: RankCorrelation<T>,
    pub kendall: RankCorrelation<T>,
    /// Advisory: rho above `min_rho` with p below `max_p`.
    pub pass: bool,
}

pub fn check_c1<T: Scalar>(
    confidence: &[T],
    accuracy: &[T],
    thresholds: &C1Thresholds,
) -> Result<C1Report<T>> {
    let sample = PairedSample::new(confidence, accuracy)?;
    if sample.len() < 3 {
        return Err(Error::InvalidArgument("C1 check needs n >= 3".into()));
    }
    let rho = spearman(sample)?;
    let tau = kendall_tau(sample)?;
    Ok(C1Report {
        n: confidence.len(),
        spearman: rho,
        kendall: tau,
        pass: rho.coefficient.f64() > thresholds.min_rho && rho.p_value.f64() < thresholds.max_p,
    })
}

/// 1 where |predicted − actual| ≤ tolerance, else 0.
pub fn within_tolerance_accuracy<T: Scalar>(predicted: &[T], actual: &[T], tolerance: T) -> Vec<T> {
    predicted
        .iter()
        .zip(actual)
        .map(|(&p, &a)| if (p - a).abs() <= tolerance { T::one() } else { T::zero() })
        .collect()
}
