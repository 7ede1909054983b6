use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_FRACTIONS: [f64; 6] = [0.0, 0.05, 0.10, 0.15, 0.20, 0.25];

/// Adverse steps smaller than this are flagged as negligible (still counted).
pub const NEGLIGIBLE_STEP: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMetric {
    /// Root mean squared error; an increase is adverse.
    Rmse,
    /// Mean accuracy; a decrease is adverse.
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbstentionCurve<T> {
    pub metric_kind: CurveMetric,
    pub fractions: Vec<f64>,
    pub retained: Vec<usize>,
    pub coverage: Vec<f64>,
    pub metric: Vec<T>,
    pub violation_count: usize,
    /// Step `j` is the move from fraction `j` to `j + 1`.
    pub violation_steps: Vec<usize>,
    pub negligible_steps: Vec<usize>,
}

impl<T: Scalar> AbstentionCurve<T> {
    /// Largest adverse step, zero when the curve is monotone.
    pub fn worst_adverse_step(&self) -> T {
        self.violation_steps
            .iter()
            .map(|&j| self.adverse_amount(j))
            .fold(T::zero(), T::max)
    }

    fn adverse_amount(&self, j: usize) -> T {
        match self.metric_kind {
            CurveMetric::Rmse => self.metric[j + 1] - self.metric[j],
            CurveMetric::Accuracy => self.metric[j] - self.metric[j + 1],
        }
    }

    pub fn at(&self, fraction: f64) -> Option<T> {
        self.fractions
            .iter()
            .position(|&f| (f - fraction).abs() < 1e-12)
            .map(|k| self.metric[k])
    }
}

fn check_fractions(fractions: &[f64]) -> Result<()> {
    if fractions.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("fractions must start at 0".into()));
    }
    if fractions.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("fractions must be strictly increasing".into()));
    }
    if fractions.iter().any(|&f| !(0.0..1.0).contains(&f)) {
        return Err(Error::InvalidArgument("abstention fraction must be in [0, 1)".into()));
    }
    Ok(())
}

fn abstained(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Case indices sorted by ascending confidence, ties by index: the order in
/// which cases are abstained on.
pub fn confidence_order<T: Scalar>(confidence: &[T]) -> Result<Vec<usize>> {
    if confidence.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("confidence".into()));
    }
    let mut idx: Vec<usize> = (0..confidence.len()).collect();
    idx.sort_by(|&a, &b| {
        confidence[a]
            .partial_cmp(&confidence[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(idx)
}

/// Curve where the cases are abstained on in the given order; `loss[k]` is
/// the per-case contribution (squared error or accuracy).
fn curve_from_order<T: Scalar>(
    loss: &[T],
    drop_order: &[usize],
    fractions: &[f64],
    kind: CurveMetric,
) -> Result<AbstentionCurve<T>> {
    check_fractions(fractions)?;
    let n = loss.len();
    if n == 0 {
        return Err(Error::Empty("abstention curve input"));
    }
    if drop_order.len() != n {
        return Err(Error::LengthMismatch {
            left: drop_order.len(),
            right: n,
        });
    }
    let mut seen = vec![false; n];
    for &k in drop_order {
        if k >= n || std::mem::replace(&mut seen[k], true) {
            return Err(Error::InvalidArgument("drop order is not a permutation".into()));
        }
    }
    let mut retained = Vec::with_capacity(fractions.len());
    let mut metric = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let d = abstained(n, f);
        let kept = &drop_order[d..];
        if kept.is_empty() {
            return Err(Error::InvalidArgument(format!("fraction {f} abstains on every case")));
        }
        let mean = kept.iter().map(|&k| loss[k]).fold(T::zero(), |a, b| a + b) / T::of_usize(kept.len());
        metric.push(match kind {
            CurveMetric::Rmse => mean.sqrt(),
            CurveMetric::Accuracy => mean,
        });
        retained.push(kept.len());
    }
    let mut curve = AbstentionCurve {
        metric_kind: kind,
        fractions: fractions.to_vec(),
        coverage: retained.iter().map(|&r| r as f64 / n as f64).collect(),
        retained,
        metric,
        violation_count: 0,
        violation_steps: Vec::new(),
        negligible_steps: Vec::new(),
    };
    for j in 0..fractions.len() - 1 {
        let adverse = curve.adverse_amount(j);
        if adverse > T::zero() {
            curve.violation_steps.push(j);
            if adverse < T::of(NEGLIGIBLE_STEP) {
                curve.negligible_steps.push(j);
            }
        }
    }
    curve.violation_count = curve.violation_steps.len();
    Ok(curve)
}

fn squared_errors<T: Scalar>(predicted: &[T], actual: &[T]) -> Result<Vec<T>> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    Ok(predicted.iter().zip(actual).map(|(&p, &a)| (p - a) * (p - a)).collect())
}

/// Selective RMSE after abstaining on the lowest-confidence `K·n` cases.
pub fn abstention_curve<T: Scalar>(
    predicted: &[T],
    actual: &[T],
    confidence: &[T],
    fractions: &[f64],
) -> Result<AbstentionCurve<T>> {
    let se = squared_errors(predicted, actual)?;
    if confidence.len() != se.len() {
        return Err(Error::LengthMismatch {
            left: confidence.len(),
            right: se.len(),
        });
    }
    curve_from_order(&se, &confidence_order(confidence)?, fractions, CurveMetric::Rmse)
}

/// Selective RMSE with an externally supplied abstention order.
pub fn abstention_curve_by_order<T: Scalar>(
    predicted: &[T],
    actual: &[T],
    drop_order: &[usize],
    fractions: &[f64],
) -> Result<AbstentionCurve<T>> {
    let se = squared_errors(predicted, actual)?;
    curve_from_order(&se, drop_order, fractions, CurveMetric::Rmse)
}

/// Selective accuracy after abstaining on the lowest-confidence `K·n` cases.
pub fn accuracy_abstention_curve<T: Scalar>(
    accuracy: &[T],
    confidence: &[T],
    fractions: &[f64],
) -> Result<AbstentionCurve<T>> {
    if confidence.len() != accuracy.len() {
        return Err(Error::LengthMismatch {
            left: confidence.len(),
            right: accuracy.len(),
        });
    }
    curve_from_order(accuracy, &confidence_order(confidence)?, fractions, CurveMetric::Accuracy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectivePoint<T> {
    pub threshold: T,
    pub coverage: f64,
    pub retained: usize,
    /// `None` when no case reaches the threshold.
    pub selective_accuracy: Option<T>,
}

pub fn selective_accuracy_curve<T: Scalar>(
    confidence: &[T],
    accuracy: &[T],
    thresholds: &[T],
) -> Result<Vec<SelectivePoint<T>>> {
    if confidence.len() != accuracy.len() {
        return Err(Error::LengthMismatch {
            left: confidence.len(),
            right: accuracy.len(),
        });
    }
    if confidence.is_empty() {
        return Err(Error::Empty("selective accuracy input"));
    }
    let n = confidence.len();
    Ok(thresholds
        .iter()
        .map(|&t| {
            let (sum, count) = confidence
                .iter()
                .zip(accuracy)
                .filter(|(&c, _)| c >= t)
                .fold((T::zero(), 0usize), |(s, k), (_, &a)| (s + a, k + 1));
            SelectivePoint {
                threshold: t,
                coverage: count as f64 / n as f64,
                retained: count,
                selective_accuracy: (count > 0).then(|| sum / T::of_usize(count)),
            }
        })
        .collect())
}

/// `|SA(t1)·φ(t1) − SA(t2)·φ(t2) − (φ(t1) − φ(t2))·m|`, with `m` the mean
/// accuracy on `t1 <= c < t2`. Zero up to rounding for any sample.
pub fn decomposition_identity_check<T: Scalar>(
    confidence: &[T],
    accuracy: &[T],
    t1: T,
    t2: T,
) -> Result<T> {
    if !(t1 < t2) {
        return Err(Error::InvalidArgument("t1 must be below t2".into()));
    }
    let pts = selective_accuracy_curve(confidence, accuracy, &[t1, t2])?;
    let (p1, p2) = (pts[0], pts[1]);
    let sa1 = p1
        .selective_accuracy
        .ok_or_else(|| Error::InvalidArgument("coverage at t1 is zero".into()))?;
    let phi1 = T::of(p1.coverage);
    let phi2 = T::of(p2.coverage);
    let upper = match p2.selective_accuracy {
        Some(sa2) => sa2 * phi2,
        None => T::zero(),
    };
    let (band_sum, band_n) = confidence
        .iter()
        .zip(accuracy)
        .filter(|(&c, _)| c >= t1 && c < t2)
        .fold((T::zero(), 0usize), |(s, k), (_, &a)| (s + a, k + 1));
    let band = if band_n == 0 {
        T::zero()
    } else {
        (phi1 - phi2) * (band_sum / T::of_usize(band_n))
    };
    Ok((sa1 * phi1 - upper - band).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fraction_zero_is_full_rmse() {
        let p = [1.0f64, 2.0, 3.0];
        let a = [2.0, 2.0, 5.0];
        let c = abstention_curve(&p, &a, &[0.3, 0.1, 0.2], &[0.0, 0.34]).unwrap();
        assert!((c.metric[0] - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        // drops index 1 (lowest confidence, zero error)
        assert!((c.metric[1] - (5.0f64 / 2.0).sqrt()).abs() < 1e-15);
        assert_eq!(c.violation_count, 1);
    }

    #[test]
    fn ties_abstain_lower_index_first() {
        let p = [0.0f64, 0.0, 0.0, 0.0];
        let a = [1.0, 3.0, 0.0, 0.0];
        let c = abstention_curve(&p, &a, &[0.0, 0.0, 0.0, 0.0], &[0.0, 0.25, 0.5]).unwrap();
        assert!((c.metric[1] - (9.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(c.metric[2], 0.0);
    }

    #[test]
    fn fraction_of_one_rejected() {
        assert!(abstention_curve(&[1.0f64], &[1.0], &[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn negligible_step_flagged() {
        // squared errors chosen so the first step rises by under 5e-4
        let p = [0.0f64; 3];
        let a = [1.0, 1.0003, 1.0];
        let c = abstention_curve(&p, &a, &[0.0, 0.2, 0.1], &[0.0, 0.34]).unwrap();
        assert_eq!(c.violation_steps, vec![0]);
        assert_eq!(c.negligible_steps, vec![0]);
    }

    #[test]
    fn threshold_zero_and_beyond_max() {
        let c = [0.1f64, 0.5, 0.9];
        let a = [1.0, 0.0, 1.0];
        let pts = selective_accuracy_curve(&c, &a, &[0.0, 2.0]).unwrap();
        assert_eq!(pts[0].coverage, 1.0);
        assert!((pts[0].selective_accuracy.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(pts[1].selective_accuracy, None);
    }

    #[test]
    fn empty_upper_threshold_band_carries_everything() {
        let c = [0.1f64, 0.5, 0.9];
        let a = [1.0, 0.0, 1.0];
        assert!(decomposition_identity_check(&c, &a, 0.0, 5.0).unwrap() < 1e-15);
    }

    proptest! {
        #[test]
        fn oracle_confidence_never_violates(
            pairs in prop::collection::vec((1.0f64..5.0, 1.0f64..5.0), 20..200),
        ) {
            let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
            let a: Vec<f64> = pairs.iter().map(|x| x.1).collect();
            let conf: Vec<f64> = p.iter().zip(&a).map(|(p, a)| -(p - a).abs()).collect();
            let c = abstention_curve(&p, &a, &conf, &DEFAULT_FRACTIONS).unwrap();
            prop_assert_eq!(c.violation_count, 0);
        }

        #[test]
        fn retained_sizes_and_coverage(
            n in 40usize..400,
            seed in any::<u64>(),
        ) {
            let conf: Vec<f64> = (0..n).map(|k| ((k as u64).wrapping_mul(seed | 1) % 7) as f64).collect();
            let z = vec![0.0f64; n];
            let c = abstention_curve(&z, &z, &conf, &DEFAULT_FRACTIONS).unwrap();
            for (k, &f) in DEFAULT_FRACTIONS.iter().enumerate() {
                prop_assert_eq!(c.retained[k], ((1.0 - f) * n as f64 - 1e-9).ceil() as usize);
            }
            prop_assert!(c.coverage.windows(2).all(|w| w[1] < w[0]));
        }

        #[test]
        fn rmse_curve_start_equals_full_metric(
            pairs in prop::collection::vec((1.0f64..5.0, 1.0f64..5.0, 0.0f64..1.0), 1..100),
        ) {
            let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
            let a: Vec<f64> = pairs.iter().map(|x| x.1).collect();
            let conf: Vec<f64> = pairs.iter().map(|x| x.2).collect();
            let full = crate::backbone::rmse(&p, &a).unwrap();
            let c = abstention_curve(&p, &a, &conf, &[0.0]).unwrap();
            prop_assert!((c.metric[0] - full).abs() <= 1e-12);
        }
    }
}
