//! Per-case confidence signals for test predictions. Higher is more
//! confident.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::{fit_als, AlsConfig, MfModel, Predictor};
use crate::dataset::{OutcomeRecord, RatingRecord, SplitDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::{fit_logistic, LogisticOptions};

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceKind {
    CountBased,
    Ensemble,
    Recency,
    ResidualPredicted,
    CombinedStructRecency,
    RandomControl,
}

impl ConfidenceKind {
    pub const ALL: [ConfidenceKind; 6] = [
        ConfidenceKind::RandomControl,
        ConfidenceKind::CountBased,
        ConfidenceKind::ResidualPredicted,
        ConfidenceKind::Ensemble,
        ConfidenceKind::Recency,
        ConfidenceKind::CombinedStructRecency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfidenceKind::CountBased => "count_based",
            ConfidenceKind::Ensemble => "ensemble",
            ConfidenceKind::Recency => "recency",
            ConfidenceKind::ResidualPredicted => "residual_predicted",
            ConfidenceKind::CombinedStructRecency => "combined_struct_recency",
            ConfidenceKind::RandomControl => "random_control",
        }
    }

    /// Learned signals only score the evaluation half of the test block.
    pub fn is_learned(self) -> bool {
        matches!(
            self,
            ConfidenceKind::Recency | ConfidenceKind::ResidualPredicted | ConfidenceKind::CombinedStructRecency
        )
    }
}

impl std::str::FromStr for ConfidenceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ConfidenceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown confidence kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceSignal<T> {
    pub kind: ConfidenceKind,
    /// Test-case indices covered, ascending.
    pub cases: Vec<usize>,
    pub scores: Vec<T>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> ConfidenceSignal<T> {
    fn full(kind: ConfidenceKind, scores: Vec<T>) -> Self {
        Self {
            kind,
            cases: (0..scores.len()).collect(),
            scores,
            warnings: Vec::new(),
        }
    }

    /// Picks `values[case]` for every covered case.
    pub fn select<V: Copy>(&self, values: &[V]) -> Vec<V> {
        self.cases.iter().map(|&k| values[k]).collect()
    }

    /// Rows of the generic stream: confidence rescaled to `[0, 1]` by rank
    /// order preserving min-max, outcome as given.
    pub fn to_outcome_stream(&self, outcomes: &[T]) -> Vec<OutcomeRecord> {
        let lo = self.scores.iter().copied().fold(T::infinity(), T::min);
        let hi = self.scores.iter().copied().fold(T::neg_infinity(), T::max);
        self.cases
            .iter()
            .zip(&self.scores)
            .map(|(&k, &s)| OutcomeRecord {
                confidence: if hi > lo { ((s - lo) / (hi - lo)).f64() } else { 0.0 },
                outcome: outcomes[k].f64(),
                tier: None,
            })
            .collect()
    }
}

/// One test case with its prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredPrediction<T> {
    pub index: usize,
    pub user: u32,
    pub item: u32,
    pub timestamp: i64,
    pub predicted: T,
    pub actual: T,
    pub residual: T,
    pub count: usize,
}

pub fn score_test_set<T: Scalar, P: Predictor<T>>(
    split: &SplitDataset,
    model: &P,
) -> Vec<ScoredPrediction<T>> {
    score_records(split, model, &split.test)
}

/// Scores arbitrary records against a split; counts always come from the
/// split's train side.
pub fn score_records<T: Scalar, P: Predictor<T>>(
    split: &SplitDataset,
    model: &P,
    records: &[RatingRecord],
) -> Vec<ScoredPrediction<T>> {
    records
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let predicted = model.predict(r.user, r.item);
            let actual = T::of(r.rating);
            ScoredPrediction {
                index,
                user: r.user,
                item: r.item,
                timestamp: r.timestamp,
                predicted,
                actual,
                residual: actual - predicted,
                count: split.observation_count(r),
            }
        })
        .collect()
}

fn min_max<T: Scalar>(raw: &[T]) -> (Vec<T>, bool) {
    let lo = raw.iter().copied().fold(T::infinity(), T::min);
    let hi = raw.iter().copied().fold(T::neg_infinity(), T::max);
    if !(hi > lo) {
        return (vec![T::zero(); raw.len()], true);
    }
    (raw.iter().map(|&v| (v - lo) / (hi - lo)).collect(), false)
}

/// Split-specific observation count, min-max normalized over the test set.
pub fn count_confidence<T: Scalar>(split: &SplitDataset) -> ConfidenceSignal<T> {
    let raw: Vec<T> = split
        .test
        .iter()
        .map(|r| T::of_usize(split.observation_count(r)))
        .collect();
    let (scores, degenerate) = min_max(&raw);
    let mut s = ConfidenceSignal::full(ConfidenceKind::CountBased, scores);
    if degenerate {
        s.warnings
            .push("all observation counts are identical; signal is degenerate".into());
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSignal<T> {
    pub signal: ConfidenceSignal<T>,
    pub mean_prediction: Vec<T>,
    pub std_dev: Vec<T>,
}

/// Population standard deviation across members, negated.
pub fn ensemble_from_predictions<T: Scalar>(members: &[Vec<T>]) -> Result<EnsembleSignal<T>> {
    if members.len() < 2 {
        return Err(Error::InvalidArgument("ensemble needs at least 2 members".into()));
    }
    let n = members[0].len();
    if let Some(bad) = members.iter().find(|m| m.len() != n) {
        return Err(Error::LengthMismatch {
            left: bad.len(),
            right: n,
        });
    }
    let m = T::of_usize(members.len());
    let mut mean = vec![T::zero(); n];
    let mut sd = vec![T::zero(); n];
    for k in 0..n {
        // shifted by the first member so exact agreement gives exactly zero
        let base = members[0][k];
        let shift = members.iter().map(|p| p[k] - base).fold(T::zero(), |a, b| a + b) / m;
        let var = members
            .iter()
            .map(|p| (p[k] - base - shift) * (p[k] - base - shift))
            .fold(T::zero(), |a, b| a + b)
            / m;
        mean[k] = base + shift;
        sd[k] = var.sqrt();
    }
    let scores = sd.iter().map(|&s| -s).collect();
    Ok(EnsembleSignal {
        signal: ConfidenceSignal::full(ConfidenceKind::Ensemble, scores),
        mean_prediction: mean,
        std_dev: sd,
    })
}

/// Trains one factorization per seed (in parallel) on the split's train set.
pub fn ensemble_confidence<T: Scalar>(
    split: &SplitDataset,
    config: &AlsConfig,
    seeds: &[u64],
) -> Result<EnsembleSignal<T>> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument("ensemble needs at least 2 seeds".into()));
    }
    let members: Vec<Vec<T>> = seeds
        .par_iter()
        .map(|&seed| {
            let model: MfModel<T> = fit_als(&split.train, &config.with_seed(seed)).map_err(|e| {
                Error::InvalidArgument(format!("ensemble member with seed {seed} failed: {e}"))
            })?;
            Ok(model.predict_all(&split.test))
        })
        .collect::<Result<_>>()?;
    ensemble_from_predictions(&members)
}

pub fn random_confidence<T: Scalar>(n: usize, seed: u64) -> ConfidenceSignal<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..n).map(|_| T::of(rng.random::<f64>())).collect();
    ConfidenceSignal::full(ConfidenceKind::RandomControl, scores)
}

/// Test indices divided into a half used to fit a confidence model and a
/// disjoint half it is evaluated on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HalfSplit {
    pub seed: u64,
    pub fit: Vec<usize>,
    pub eval: Vec<usize>,
}

impl HalfSplit {
    /// Seeded permutation; even positions fit, odd positions evaluate.
    pub fn new(n: usize, seed: u64) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut fit: Vec<usize> = perm.iter().step_by(2).copied().collect();
        let mut eval: Vec<usize> = perm.iter().skip(1).step_by(2).copied().collect();
        fit.sort_unstable();
        eval.sort_unstable();
        Self { seed, fit, eval }
    }
}

/// Staleness and activity of the user and item just before a test case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecencyFeatures {
    /// `None` when the user has no earlier rating.
    pub time_since_last_user_rating: Option<i64>,
    pub time_since_last_item_rating: Option<i64>,
    /// Ratings per day over the trailing window.
    pub user_rating_velocity: f64,
    pub item_rating_velocity: f64,
}

impl RecencyFeatures {
    /// `[log1p(days since user), user never seen, user velocity, same for item]`.
    pub fn to_row<T: Scalar>(&self) -> Vec<T> {
        let mut row = Vec::with_capacity(6);
        for (gap, vel) in [
            (self.time_since_last_user_rating, self.user_rating_velocity),
            (self.time_since_last_item_rating, self.item_rating_velocity),
        ] {
            match gap {
                Some(s) => {
                    row.push(T::of((s as f64 / SECONDS_PER_DAY).ln_1p()));
                    row.push(T::zero());
                }
                None => {
                    row.push(T::zero());
                    row.push(T::one());
                }
            }
            row.push(T::of(vel));
        }
        row
    }
}

/// History for each test case is every rating, train or test, with a
/// strictly earlier timestamp.
pub fn recency_features(split: &SplitDataset, window_days: f64) -> Vec<RecencyFeatures> {
    let mut by_user: HashMap<u32, Vec<i64>> = HashMap::new();
    let mut by_item: HashMap<u32, Vec<i64>> = HashMap::new();
    for r in split.train.iter().chain(&split.test) {
        by_user.entry(r.user).or_default().push(r.timestamp);
        by_item.entry(r.item).or_default().push(r.timestamp);
    }
    for v in by_user.values_mut().chain(by_item.values_mut()) {
        v.sort_unstable();
    }
    let window = (window_days * SECONDS_PER_DAY).round() as i64;
    let lookup = |times: Option<&Vec<i64>>, t: i64| -> (Option<i64>, f64) {
        let Some(times) = times else { return (None, 0.0) };
        let p = times.partition_point(|&x| x < t);
        if p == 0 {
            return (None, 0.0);
        }
        let lo = times.partition_point(|&x| x < t - window);
        (Some(t - times[p - 1]), (p - lo) as f64 / window_days)
    };
    split
        .test
        .iter()
        .map(|r| {
            let (gu, vu) = lookup(by_user.get(&r.user), r.timestamp);
            let (gi, vi) = lookup(by_item.get(&r.item), r.timestamp);
            RecencyFeatures {
                time_since_last_user_rating: gu,
                time_since_last_item_rating: gi,
                user_rating_velocity: vu,
                item_rating_velocity: vi,
            }
        })
        .collect()
}

fn constant_columns<T: Scalar>(rows: &[Vec<T>]) -> Vec<usize> {
    let Some(first) = rows.first() else { return Vec::new() };
    (0..first.len())
        .filter(|&c| rows.iter().all(|r| r[c] == first[c]))
        .collect()
}

/// Fits a logistic model on the fit half to predict `|error|` above the fit
/// half's median, then scores the evaluation half with `1 − P(high error)`.
pub fn learned_confidence<T: Scalar>(
    kind: ConfidenceKind,
    features: &[Vec<T>],
    abs_error: &[T],
    half: &HalfSplit,
    opts: &LogisticOptions,
) -> Result<ConfidenceSignal<T>> {
    if features.len() != abs_error.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: abs_error.len(),
        });
    }
    if half.fit.is_empty() || half.eval.is_empty() {
        return Err(Error::Empty("half split"));
    }
    let fit_err: Vec<T> = half.fit.iter().map(|&k| abs_error[k]).collect();
    let median = crate::stats::quantile_linear(&fit_err, 0.5)?;
    let x_fit: Vec<Vec<T>> = half.fit.iter().map(|&k| features[k].clone()).collect();
    let y_fit: Vec<bool> = fit_err.iter().map(|&e| e > median).collect();
    let model = fit_logistic(&x_fit, &y_fit, opts).map_err(|e| match e {
        Error::Degenerate(m) => Error::Degenerate(format!("{}: {m}", kind.as_str())),
        other => other,
    })?;
    let scores = half
        .eval
        .iter()
        .map(|&k| T::one() - model.probability(&features[k]))
        .collect();
    let mut warnings = Vec::new();
    let constant = constant_columns(features);
    if !constant.is_empty() {
        warnings.push(format!("constant feature columns {constant:?}"));
    }
    Ok(ConfidenceSignal {
        kind,
        cases: half.eval.clone(),
        scores,
        warnings,
    })
}

fn abs_errors<T: Scalar>(scored: &[ScoredPrediction<T>]) -> Vec<T> {
    scored.iter().map(|s| s.residual.abs()).collect()
}

pub fn recency_confidence<T: Scalar>(
    split: &SplitDataset,
    scored: &[ScoredPrediction<T>],
    window_days: f64,
    half: &HalfSplit,
    opts: &LogisticOptions,
) -> Result<ConfidenceSignal<T>> {
    let rows: Vec<Vec<T>> = recency_features(split, window_days)
        .iter()
        .map(RecencyFeatures::to_row)
        .collect();
    let mut s = learned_confidence(ConfidenceKind::Recency, &rows, &abs_errors(scored), half, opts)?;
    if split.test.windows(2).all(|w| w[0].timestamp == w[1].timestamp) {
        s.warnings.push("all test cases share one timestamp".into());
    }
    Ok(s)
}

/// Features: prediction, squared prediction, normalized observation count.
pub fn residual_features<T: Scalar>(scored: &[ScoredPrediction<T>]) -> Vec<Vec<T>> {
    let max = scored.iter().map(|s| s.count).max().unwrap_or(0).max(1);
    scored
        .iter()
        .map(|s| {
            vec![
                s.predicted,
                s.predicted * s.predicted,
                T::of_usize(s.count) / T::of_usize(max),
            ]
        })
        .collect()
}

pub fn residual_predicted_confidence<T: Scalar>(
    scored: &[ScoredPrediction<T>],
    half: &HalfSplit,
    opts: &LogisticOptions,
) -> Result<ConfidenceSignal<T>> {
    learned_confidence(
        ConfidenceKind::ResidualPredicted,
        &residual_features(scored),
        &abs_errors(scored),
        half,
        opts,
    )
}

/// Recency features plus `log1p` of the observation count.
pub fn combined_confidence<T: Scalar>(
    split: &SplitDataset,
    scored: &[ScoredPrediction<T>],
    window_days: f64,
    half: &HalfSplit,
    opts: &LogisticOptions,
) -> Result<ConfidenceSignal<T>> {
    let rows: Vec<Vec<T>> = recency_features(split, window_days)
        .iter()
        .zip(scored)
        .map(|(f, s)| {
            let mut row = f.to_row();
            row.push(T::of((s.count as f64).ln_1p()));
            row
        })
        .collect();
    learned_confidence(
        ConfidenceKind::CombinedStructRecency,
        &rows,
        &abs_errors(scored),
        half,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{BaselineKind, BaselineModel};
    use crate::dataset::{make_split, SplitKind, SplitSpec};
    use crate::stats::quantile_linear;
    use proptest::prelude::*;
    use rand::Rng;

    fn rec(user: u32, item: u32, rating: f64, timestamp: i64) -> RatingRecord {
        RatingRecord {
            user,
            item,
            rating,
            timestamp,
        }
    }

    fn toy_split(kind: SplitKind) -> SplitDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut recs = Vec::new();
        for k in 0..400 {
            let user = rng.random_range(0..30u32);
            let item = rng.random_range(0..40u32);
            recs.push(rec(user, item, rng.random_range(1..=5) as f64, k * 3600));
        }
        make_split(&recs, &SplitSpec::new(kind)).unwrap()
    }

    #[test]
    fn count_signal_endpoints() {
        let s = toy_split(SplitKind::Temporal);
        let c: ConfidenceSignal<f64> = count_confidence(&s);
        let counts: Vec<usize> = s.test.iter().map(|r| s.observation_count(r)).collect();
        let max = *counts.iter().max().unwrap();
        for (k, &cnt) in counts.iter().enumerate() {
            if cnt == max {
                assert_eq!(c.scores[k], 1.0);
            }
        }
        assert!(c.scores.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn cold_user_same_item_same_confidence() {
        let s = toy_split(SplitKind::ColdUser);
        let c: ConfidenceSignal<f64> = count_confidence(&s);
        for a in 0..s.test.len() {
            for b in 0..s.test.len() {
                if s.test[a].item == s.test[b].item {
                    assert_eq!(c.scores[a], c.scores[b]);
                }
            }
        }
    }

    #[test]
    fn identical_counts_warn() {
        let recs = vec![rec(1, 1, 3.0, 0), rec(2, 2, 3.0, 1), rec(1, 1, 4.0, 2), rec(2, 2, 2.0, 3)];
        let s = make_split(&recs, &SplitSpec::new(SplitKind::Temporal).with_test_fraction(0.5)).unwrap();
        let c: ConfidenceSignal<f64> = count_confidence(&s);
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn ensemble_hand_cases() {
        let e = ensemble_from_predictions(&[vec![3.0f64, 2.0], vec![4.0, 2.0]]).unwrap();
        assert_eq!(e.std_dev, vec![0.5, 0.0]);
        assert_eq!(e.mean_prediction, vec![3.5, 2.0]);
        assert!(ensemble_from_predictions(&[vec![1.0f64]]).is_err());
    }

    #[test]
    fn identical_seeds_give_zero_disagreement() {
        let s = toy_split(SplitKind::Temporal);
        let cfg = AlsConfig { rank: 2, iterations: 3, ..AlsConfig::default() };
        let e: EnsembleSignal<f64> = ensemble_confidence(&s, &cfg, &[7, 7, 7]).unwrap();
        assert!(e.std_dev.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_signal_repeats_with_seed() {
        let a: ConfidenceSignal<f64> = random_confidence(50, 4);
        let b: ConfidenceSignal<f64> = random_confidence(50, 4);
        assert_eq!(a, b);
    }

    #[test]
    fn half_split_partitions() {
        let h = HalfSplit::new(101, 3);
        assert_eq!(h.fit.len(), 51);
        assert_eq!(h.eval.len(), 50);
        let mut all: Vec<usize> = h.fit.iter().chain(&h.eval).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
    }

    #[test]
    fn recency_features_use_strictly_earlier_history() {
        let train = vec![rec(1, 10, 3.0, 0), rec(2, 10, 3.0, 86_400)];
        let test = vec![rec(1, 11, 3.0, 2 * 86_400), rec(3, 11, 3.0, 2 * 86_400), rec(1, 10, 3.0, 5 * 86_400)];
        let all: Vec<_> = train.iter().chain(&test).copied().collect();
        let s = make_split(&all, &SplitSpec::new(SplitKind::Temporal).with_test_fraction(0.6)).unwrap();
        let f = recency_features(&s, 30.0);
        assert_eq!(f[0].time_since_last_user_rating, Some(2 * 86_400));
        // same-timestamp test event on item 11 does not count as history
        assert_eq!(f[0].time_since_last_item_rating, None);
        assert_eq!(f[1].time_since_last_user_rating, None);
        assert_eq!(f[2].time_since_last_user_rating, Some(3 * 86_400));
        assert_eq!(f[2].time_since_last_item_rating, Some(4 * 86_400));
        assert!((f[2].user_rating_velocity - 2.0 / 30.0).abs() < 1e-15);
        let row: Vec<f64> = f[1].to_row();
        assert_eq!(&row[..3], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn global_mean_backbone_makes_prediction_features_constant() {
        let s = toy_split(SplitKind::Temporal);
        let m: BaselineModel<f64> = BaselineModel::fit(BaselineKind::GlobalMean, &s.train).unwrap();
        let scored = score_test_set(&s, &m);
        let rows = residual_features(&scored);
        assert_eq!(constant_columns(&rows), vec![0, 1]);
        let half = HalfSplit::new(scored.len(), 0);
        let sig = residual_predicted_confidence(&scored, &half, &LogisticOptions::default()).unwrap();
        assert!(!sig.warnings.is_empty());
        // ordering follows the count feature alone
        let counts: Vec<usize> = sig.cases.iter().map(|&k| scored[k].count).collect();
        for a in 0..counts.len() {
            for b in 0..counts.len() {
                if counts[a] == counts[b] {
                    assert!((sig.scores[a] - sig.scores[b]).abs() < 1e-12);
                }
            }
        }
    }

    /// Eight cases, one feature; penalized fit against a 1-D grid search over
    /// (w, b) in the standardized space.
    #[test]
    fn eight_case_learned_signal_matches_grid_oracle() {
        let x = [0.1f64, 0.5, 0.9, 1.3, 1.7, 2.1, 2.5, 2.9];
        let err = [0.2f64, 0.9, 0.1, 1.4, 0.3, 1.9, 1.1, 2.2];
        let feats: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let half = HalfSplit {
            seed: 0,
            fit: (0..8).collect(),
            eval: (0..8).collect(),
        };
        let sig = learned_confidence(
            ConfidenceKind::ResidualPredicted,
            &feats,
            &err,
            &half,
            &LogisticOptions::default(),
        )
        .unwrap();

        let med = quantile_linear(&err, 0.5).unwrap();
        let y: Vec<bool> = err.iter().map(|&e| e > med).collect();
        let mean = x.iter().sum::<f64>() / 8.0;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0).sqrt();
        let z: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();
        let obj = |w: f64, b: f64| {
            let ll: f64 = z
                .iter()
                .zip(&y)
                .map(|(&zi, &yi)| {
                    let p = 1.0 / (1.0 + (-(w * zi + b)).exp());
                    if yi { p.ln() } else { (1.0 - p).ln() }
                })
                .sum();
            ll - 0.5 * w * w
        };
        let (mut best, mut bw, mut bb) = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..=400 {
            for j in 0..=400 {
                let w = -4.0 + 8.0 * i as f64 / 400.0;
                let b = -4.0 + 8.0 * j as f64 / 400.0;
                let o = obj(w, b);
                if o > best {
                    (best, bw, bb) = (o, w, b);
                }
            }
        }
        for (k, &zk) in z.iter().enumerate() {
            let oracle = 1.0 - 1.0 / (1.0 + (-(bw * zk + bb)).exp());
            assert!((sig.scores[k] - oracle).abs() < 0.01, "case {k}");
        }
    }

    #[test]
    fn degenerate_labels_fail() {
        let feats = vec![vec![1.0f64]; 6];
        let err = [1.0f64; 6];
        let half = HalfSplit::new(6, 1);
        assert!(matches!(
            learned_confidence(ConfidenceKind::Recency, &feats, &err, &half, &LogisticOptions::default()),
            Err(Error::Degenerate(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn count_signal_ignores_rating_values(seed in 0u64..200) {
            let s = toy_split(SplitKind::Temporal);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = s.clone();
            for r in t.train.iter_mut().chain(t.test.iter_mut()) {
                r.rating = rng.random_range(1..=5) as f64;
            }
            let a: ConfidenceSignal<f64> = count_confidence(&s);
            let b: ConfidenceSignal<f64> = count_confidence(&t);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn ensemble_zero_iff_agreement(rows in prop::collection::vec(prop::collection::vec(1.0f64..5.0, 3), 1..30)) {
            let members: Vec<Vec<f64>> = (0..3).map(|m| rows.iter().map(|r| r[m]).collect()).collect();
            let e = ensemble_from_predictions(&members).unwrap();
            for (k, r) in rows.iter().enumerate() {
                let agree = r.iter().all(|&v| (v - r[0]).abs() <= 1e-12);
                prop_assert_eq!(e.std_dev[k] <= 1e-12, agree);
                prop_assert!(e.signal.scores[k].is_finite());
            }
        }
    }
}
