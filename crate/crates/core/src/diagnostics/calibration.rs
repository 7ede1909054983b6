use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationBin<T> {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_confidence: Option<T>,
    pub accuracy: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport<T> {
    pub n_bins: usize,
    pub bins: Vec<CalibrationBin<T>>,
    pub ece: T,
}

/// Expected calibration error over `n_bins` equal-width bins on `[0, 1]`;
/// confidence 1.0 falls in the last bin.
pub fn ece<T: Scalar>(confidence: &[T], accuracy: &[T], n_bins: usize) -> Result<CalibrationReport<T>> {
    if confidence.len() != accuracy.len() {
        return Err(Error::LengthMismatch {
            left: confidence.len(),
            right: accuracy.len(),
        });
    }
    if confidence.is_empty() {
        return Err(Error::Empty("calibration input"));
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be >= 1".into()));
    }
    if confidence.iter().any(|&c| !(c >= T::zero() && c <= T::one())) {
        return Err(Error::InvalidArgument("confidence must lie in [0, 1]".into()));
    }
    let mut conf_sum = vec![T::zero(); n_bins];
    let mut acc_sum = vec![T::zero(); n_bins];
    let mut count = vec![0usize; n_bins];
    for (&c, &a) in confidence.iter().zip(accuracy) {
        let b = ((c.f64() * n_bins as f64).floor() as usize).min(n_bins - 1);
        conf_sum[b] += c;
        acc_sum[b] += a;
        count[b] += 1;
    }
    let n = T::of_usize(confidence.len());
    let mut total = T::zero();
    let bins = (0..n_bins)
        .map(|b| {
            let (mc, ma) = if count[b] > 0 {
                let k = T::of_usize(count[b]);
                (Some(conf_sum[b] / k), Some(acc_sum[b] / k))
            } else {
                (None, None)
            };
            if let (Some(mc), Some(ma)) = (mc, ma) {
                total += T::of_usize(count[b]) / n * (mc - ma).abs();
            }
            CalibrationBin {
                lo: b as f64 / n_bins as f64,
                hi: (b + 1) as f64 / n_bins as f64,
                count: count[b],
                mean_confidence: mc,
                accuracy: ma,
            }
        })
        .collect();
    Ok(CalibrationReport {
        n_bins,
        bins,
        ece: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfectly_calibrated_fixture() {
        // bin [0.2, 0.3): confidence 0.25, 1 of 4 correct; bin [0.7, 0.8): 0.75, 3 of 4
        let c = [0.25f64, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75];
        let a = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        assert_eq!(ece(&c, &a, 10).unwrap().ece, 0.0);
    }

    #[test]
    fn fully_miscalibrated_fixture() {
        assert_eq!(ece(&[1.0f64; 5], &[0.0; 5], 10).unwrap().ece, 1.0);
    }

    #[test]
    fn out_of_range_confidence_rejected() {
        assert!(ece(&[1.5f64], &[1.0], 10).is_err());
    }

    #[test]
    fn random_fixture_matches_direct_bin_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let c: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let a: Vec<f64> = (0..100).map(|_| if rng.random::<f64>() < 0.6 { 1.0 } else { 0.0 }).collect();
        let mut oracle = 0.0;
        for b in 0..10 {
            let lo = b as f64 / 10.0;
            let hi = (b + 1) as f64 / 10.0;
            let members: Vec<usize> = (0..100)
                .filter(|&k| c[k] >= lo && (c[k] < hi || (b == 9 && c[k] <= 1.0)))
                .collect();
            if members.is_empty() {
                continue;
            }
            let mc = members.iter().map(|&k| c[k]).sum::<f64>() / members.len() as f64;
            let ma = members.iter().map(|&k| a[k]).sum::<f64>() / members.len() as f64;
            oracle += members.len() as f64 / 100.0 * (mc - ma).abs();
        }
        assert!((ece(&c, &a, 10).unwrap().ece - oracle).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            pts in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..80),
            rot in 0usize..80,
        ) {
            let c: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let a: Vec<f64> = pts.iter().map(|p| if p.1 { 1.0 } else { 0.0 }).collect();
            let k = rot % c.len();
            let mut c2 = c.clone();
            let mut a2 = a.clone();
            c2.rotate_left(k);
            a2.rotate_left(k);
            c2.reverse();
            a2.reverse();
            let e1 = ece(&c, &a, 10).unwrap().ece;
            let e2 = ece(&c2, &a2, 10).unwrap().ece;
            prop_assert!((e1 - e2).abs() < 1e-12);
        }
    }
}
