//! Residual-defined exceptions, their shift between train and test, and the
//! threshold artifact in binarized error counts.

use serde::Serialize;

use crate::confidence::ScoredPrediction;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::{
    fit_logistic, ks_two_sample, quantile_linear, roc_auc, BinaryScoredSample, KsTest,
    LogisticOptions,
};

pub const EXCEPTION_QUANTILE: f64 = 0.95;
pub const DEFAULT_BINARIZATION: [f64; 3] = [3.5, 4.0, 4.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExceptionLabels<T> {
    pub tau: T,
    pub train_rate: f64,
    pub test_rate: f64,
}

fn abs_all<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|x| x.abs()).collect()
}

fn rate_above<T: Scalar>(abs: &[T], tau: T) -> f64 {
    abs.iter().filter(|&&v| v > tau).count() as f64 / abs.len() as f64
}

/// `tau` is the 0.95 quantile of |train residual|; a case is an exception
/// when its |residual| exceeds `tau`.
pub fn label_exceptions<T: Scalar>(train_residuals: &[T], test_residuals: &[T]) -> Result<ExceptionLabels<T>> {
    if train_residuals.is_empty() || test_residuals.is_empty() {
        return Err(Error::Empty("residuals"));
    }
    let tr = abs_all(train_residuals);
    let te = abs_all(test_residuals);
    let tau = quantile_linear(&tr, EXCEPTION_QUANTILE)?;
    Ok(ExceptionLabels {
        tau,
        train_rate: rate_above(&tr, tau),
        test_rate: rate_above(&te, tau),
    })
}

/// Two-sample KS on absolute residuals.
pub fn residual_shift_test<T: Scalar>(train_residuals: &[T], test_residuals: &[T]) -> Result<KsTest<T>> {
    ks_two_sample(&abs_all(train_residuals), &abs_all(test_residuals))
}

/// Prediction, squared prediction, and observation count scaled by
/// `count_scale`.
pub fn exception_features<T: Scalar>(scored: &[ScoredPrediction<T>], count_scale: f64) -> Vec<Vec<T>> {
    scored
        .iter()
        .map(|s| {
            vec![
                s.predicted,
                s.predicted * s.predicted,
                T::of(s.count as f64 / count_scale),
            ]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifierAuc<T> {
    pub auc_train: T,
    pub auc_test: T,
}

/// Fits the exception classifier on train cases and reports ROC AUC of its
/// decision score on both sides.
pub fn exception_classifier<T: Scalar>(
    train: &[ScoredPrediction<T>],
    test: &[ScoredPrediction<T>],
    tau: T,
    opts: &LogisticOptions,
) -> Result<ClassifierAuc<T>> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("exception classifier input"));
    }
    let scale = train.iter().map(|s| s.count).max().unwrap_or(0).max(1) as f64;
    let xtr = exception_features(train, scale);
    let xte = exception_features(test, scale);
    let ytr: Vec<bool> = train.iter().map(|s| s.residual.abs() > tau).collect();
    let yte: Vec<bool> = test.iter().map(|s| s.residual.abs() > tau).collect();
    let model = fit_logistic(&xtr, &ytr, opts)?;
    let str_: Vec<T> = xtr.iter().map(|r| model.decision(r)).collect();
    let ste: Vec<T> = xte.iter().map(|r| model.decision(r)).collect();
    Ok(ClassifierAuc {
        auc_train: roc_auc(BinaryScoredSample::new(&str_, &ytr)?)?,
        auc_test: roc_auc(BinaryScoredSample::new(&ste, &yte)?)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExceptionReport<T> {
    pub tau: T,
    pub train_rate: f64,
    pub test_rate: f64,
    pub ks_stat: T,
    pub ks_p: T,
    pub auc_train: T,
    pub auc_test: T,
}

pub fn exception_report<T: Scalar>(
    train: &[ScoredPrediction<T>],
    test: &[ScoredPrediction<T>],
    opts: &LogisticOptions,
) -> Result<ExceptionReport<T>> {
    let rtr: Vec<T> = train.iter().map(|s| s.residual).collect();
    let rte: Vec<T> = test.iter().map(|s| s.residual).collect();
    let labels = label_exceptions(&rtr, &rte)?;
    let ks = residual_shift_test(&rtr, &rte)?;
    let auc = exception_classifier(train, test, labels.tau, opts)?;
    Ok(ExceptionReport {
        tau: labels.tau,
        train_rate: labels.train_rate,
        test_rate: labels.test_rate,
        ks_stat: ks.statistic,
        ks_p: ks.p_value,
        auc_train: auc.auc_train,
        auc_test: auc.auc_test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FpFnRow {
    pub threshold: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
    /// FP / FN; `None` when FN is zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpFnReport {
    pub rows: Vec<FpFnRow>,
}

impl FpFnReport {
    pub fn at(&self, threshold: f64) -> Option<&FpFnRow> {
        self.rows.iter().find(|r| (r.threshold - threshold).abs() < 1e-12)
    }
}

/// Positive class is `value >= threshold` for prediction and actual alike.
pub fn fp_fn_ratio<T: Scalar>(predicted: &[T], actual: &[T], thresholds: &[f64]) -> Result<FpFnReport> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    let rows = thresholds
        .iter()
        .map(|&tb| {
            let t = T::of(tb);
            let mut row = FpFnRow {
                threshold: tb,
                true_positive: 0,
                false_positive: 0,
                true_negative: 0,
                false_negative: 0,
                ratio: None,
            };
            for (&p, &a) in predicted.iter().zip(actual) {
                match (p >= t, a >= t) {
                    (true, true) => row.true_positive += 1,
                    (true, false) => row.false_positive += 1,
                    (false, false) => row.true_negative += 1,
                    (false, true) => row.false_negative += 1,
                }
            }
            row.ratio = (row.false_negative > 0).then(|| row.false_positive as f64 / row.false_negative as f64);
            row
        })
        .collect();
    Ok(FpFnReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sp(predicted: f64, actual: f64, count: usize) -> ScoredPrediction<f64> {
        ScoredPrediction {
            index: 0,
            user: 0,
            item: 0,
            timestamp: 0,
            predicted,
            actual,
            residual: actual - predicted,
            count,
        }
    }

    #[test]
    fn twenty_point_tau_matches_sort_oracle() {
        let r: Vec<f64> = (1..=20).map(|k| if k % 2 == 0 { k as f64 } else { -(k as f64) }).collect();
        let l = label_exceptions(&r, &r).unwrap();
        // sorted |r| = 1..20, h = 19 * 0.95 = 18.05 -> 19 + 0.05 * (20 - 19)
        assert!((l.tau - 19.05).abs() < 1e-12);
        assert_eq!(l.train_rate, 0.05);
        assert_eq!(l.test_rate, l.train_rate);
    }

    #[test]
    fn same_distribution_keeps_rate_and_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = Normal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..20_000).map(|_| d.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..20_000).map(|_| d.sample(&mut rng)).collect();
        let l = label_exceptions(&a, &b).unwrap();
        assert!((l.test_rate - 0.05).abs() < 0.006);
        assert!(residual_shift_test(&a, &b).unwrap().p_value > 0.001);
    }

    #[test]
    fn identical_predictions_have_no_errors() {
        let v = [1.0f64, 3.5, 4.0, 4.5, 5.0];
        let r = fp_fn_ratio(&v, &v, &DEFAULT_BINARIZATION).unwrap();
        for row in &r.rows {
            assert_eq!((row.false_positive, row.false_negative), (0, 0));
            assert_eq!(row.ratio, None);
        }
    }

    #[test]
    fn binarization_is_inclusive() {
        let r = fp_fn_ratio(&[3.5f64, 3.4], &[3.4, 3.5], &[3.5]).unwrap();
        assert_eq!(r.rows[0].false_positive, 1);
        assert_eq!(r.rows[0].false_negative, 1);
        assert_eq!(r.rows[0].ratio, Some(1.0));
    }

    #[test]
    fn independent_labels_give_chance_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = Normal::new(0.0, 1.0).unwrap();
        let mk = |rng: &mut ChaCha8Rng| {
            let p: f64 = rng.random_range(1.0..5.0);
            sp(p, p + d.sample(rng), rng.random_range(0..100))
        };
        let train: Vec<_> = (0..20_000).map(|_| mk(&mut rng)).collect();
        let test: Vec<_> = (0..20_000).map(|_| mk(&mut rng)).collect();
        let rtr: Vec<f64> = train.iter().map(|s| s.residual).collect();
        let tau = label_exceptions(&rtr, &rtr).unwrap().tau;
        let auc = exception_classifier(&train, &test, tau, &LogisticOptions::default()).unwrap();
        // 1,000 positives: standard error of AUC about 0.01
        assert!((auc.auc_train - 0.5).abs() < 0.035, "{auc:?}");
        assert!((auc.auc_test - 0.5).abs() < 0.035, "{auc:?}");
    }

    #[test]
    fn planted_count_signal_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Normal::new(0.0, 1.0).unwrap();
        let mk = |rng: &mut ChaCha8Rng| {
            let count: usize = rng.random_range(0..100);
            let sd = 0.2 + 2.0 / (1.0 + count as f64);
            sp(3.0, 3.0 + sd * d.sample(rng), count)
        };
        let train: Vec<_> = (0..4000).map(|_| mk(&mut rng)).collect();
        let test: Vec<_> = (0..4000).map(|_| mk(&mut rng)).collect();
        let rtr: Vec<f64> = train.iter().map(|s| s.residual).collect();
        let tau = label_exceptions(&rtr, &rtr).unwrap().tau;
        let auc = exception_classifier(&train, &test, tau, &LogisticOptions::default()).unwrap();
        assert!(auc.auc_train > 0.75, "{auc:?}");
        assert!(auc.auc_test > 0.75, "{auc:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn confusion_counts_cover_classes(
            pairs in prop::collection::vec((1.0f64..=5.0, 1.0f64..=5.0), 1..100),
        ) {
            let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
            let a: Vec<f64> = pairs.iter().map(|x| x.1).collect();
            let r = fp_fn_ratio(&p, &a, &DEFAULT_BINARIZATION).unwrap();
            for row in &r.rows {
                let pos = a.iter().filter(|&&v| v >= row.threshold).count();
                prop_assert_eq!(row.false_negative + row.true_positive, pos);
                prop_assert_eq!(row.false_positive + row.true_negative, a.len() - pos);
            }
        }

        #[test]
        fn auc_invariant_to_monotone_feature_rescaling(seed in 0u64..40, scale in 0.1f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = Normal::new(0.0, 1.0).unwrap();
            let mk = |rng: &mut ChaCha8Rng| {
                let count: usize = rng.random_range(0..50);
                let p: f64 = rng.random_range(1.0..5.0);
                sp(p, p + (0.3 + 1.0 / (1.0 + count as f64)) * d.sample(rng), count)
            };
            let train: Vec<_> = (0..600).map(|_| mk(&mut rng)).collect();
            let test: Vec<_> = (0..600).map(|_| mk(&mut rng)).collect();
            let rtr: Vec<f64> = train.iter().map(|s| s.residual).collect();
            let tau = label_exceptions(&rtr, &rtr).unwrap().tau;
            let a = exception_classifier(&train, &test, tau, &LogisticOptions::default()).unwrap();
            let feats = |v: &[ScoredPrediction<f64>]| exception_features(v, 1.0 / scale);
            let ytr: Vec<bool> = train.iter().map(|s| s.residual.abs() > tau).collect();
            let m = fit_logistic(&feats(&train), &ytr, &LogisticOptions::default()).unwrap();
            let s: Vec<f64> = feats(&train).iter().map(|r| m.decision(r)).collect();
            let b = roc_auc(BinaryScoredSample::new(&s, &ytr).unwrap()).unwrap();
            prop_assert!((a.auc_train - b).abs() < 1e-6);
        }
    }
}
