//! Sliding-window recalibration of a confidence gate and the sequential
//! block experiment that compares it with the static gate.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::backbone::rmse;
use crate::diagnostics::{
    abstention_curve, abstention_curve_by_order, tail_inversions, AbstentionCurve, QualityMode,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::quantile_linear;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecalConfig {
    pub n_bins: usize,
    /// Quantile of the window's absolute errors that a tier must not exceed
    /// to be acted on.
    pub alpha: f64,
}

impl Default for RecalConfig {
    fn default() -> Self {
        Self {
            n_bins: 10,
            alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecalState<T> {
    /// Lower edges of the fine bins; bin `j` is `[e_j, e_{j+1})`, the last
    /// one unbounded above and the first unbounded below.
    pub edges: Vec<T>,
    pub bin_counts: Vec<usize>,
    pub bin_mae: Vec<Option<T>>,
    /// Consecutive fine bins grouped after merging inverted ones upward.
    pub tiers: Vec<Vec<usize>>,
    pub tier_counts: Vec<usize>,
    pub tier_mae: Vec<T>,
    pub merges: usize,
    pub alpha: f64,
    pub alpha_mae: T,
    /// Lowest tier edge whose quality meets `alpha`; `None` means never act.
    pub threshold: Option<T>,
}

impl<T: Scalar> RecalState<T> {
    pub fn bin_of(&self, c: T) -> usize {
        self.edges[1..].partition_point(|e| *e <= c)
    }

    pub fn tier_of(&self, c: T) -> usize {
        let b = self.bin_of(c);
        self.tiers
            .iter()
            .position(|t| t.contains(&b))
            .expect("tiers partition the bins")
    }

    /// Abstention order for new cases: worst window tier first, then lower
    /// confidence, then index.
    pub fn drop_order(&self, confidence: &[T]) -> Vec<usize> {
        let tier_mae: Vec<T> = confidence.iter().map(|&c| self.tier_mae[self.tier_of(c)]).collect();
        let mut idx: Vec<usize> = (0..confidence.len()).collect();
        idx.sort_by(|&a, &b| {
            tier_mae[b]
                .partial_cmp(&tier_mae[a])
                .unwrap_or(Ordering::Equal)
                .then(confidence[a].partial_cmp(&confidence[b]).unwrap_or(Ordering::Equal))
                .then(a.cmp(&b))
        });
        idx
    }
}

fn pooled<T: Scalar>(bins: &[usize], sums: &[T], counts: &[usize]) -> (T, usize) {
    bins.iter()
        .fold((T::zero(), 0), |(s, n), &b| (s + sums[b], n + counts[b]))
}

pub fn recalibrate<T: Scalar>(
    confidence: &[T],
    abs_error: &[T],
    config: &RecalConfig,
) -> Result<RecalState<T>> {
    if confidence.len() != abs_error.len() {
        return Err(Error::LengthMismatch {
            left: confidence.len(),
            right: abs_error.len(),
        });
    }
    if confidence.is_empty() {
        return Err(Error::Empty("recalibration window"));
    }
    if config.n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be >= 1".into()));
    }
    let mut edges = Vec::with_capacity(config.n_bins);
    for j in 0..config.n_bins {
        let e = quantile_linear(confidence, j as f64 / config.n_bins as f64)?;
        if edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    let nb = edges.len();
    let mut sums = vec![T::zero(); nb];
    let mut counts = vec![0usize; nb];
    for (&c, &e) in confidence.iter().zip(abs_error) {
        let b = edges[1..].partition_point(|x| *x <= c);
        sums[b] += e;
        counts[b] += 1;
    }
    let bin_mae = (0..nb)
        .map(|b| (counts[b] > 0).then(|| sums[b] / T::of_usize(counts[b])))
        .collect();

    // nonempty bins start as their own tier; empty ones ride with the next
    let mut tiers: Vec<Vec<usize>> = Vec::new();
    let mut carry = Vec::new();
    for b in 0..nb {
        carry.push(b);
        if counts[b] > 0 {
            tiers.push(std::mem::take(&mut carry));
        }
    }
    if let Some(last) = tiers.last_mut() {
        last.extend(carry);
    }

    let mut merges = 0;
    loop {
        let stats: Vec<(T, usize)> = tiers.iter().map(|t| pooled(t, &sums, &counts)).collect();
        let inv = tail_inversions(&stats, QualityMode::Error);
        let Some(&i) = inv.first() else { break };
        let upper = tiers.remove(i + 1);
        tiers[i].extend(upper);
        merges += 1;
    }
    let stats: Vec<(T, usize)> = tiers.iter().map(|t| pooled(t, &sums, &counts)).collect();
    let tier_mae: Vec<T> = stats.iter().map(|&(s, n)| s / T::of_usize(n)).collect();
    let alpha_mae = quantile_linear(abs_error, config.alpha)?;
    let threshold = tier_mae
        .iter()
        .position(|&m| m <= alpha_mae)
        .map(|t| edges[tiers[t][0]]);
    Ok(RecalState {
        edges,
        bin_counts: counts,
        bin_mae,
        tier_counts: stats.iter().map(|s| s.1).collect(),
        tiers,
        tier_mae,
        merges,
        alpha: config.alpha,
        alpha_mae,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSource {
    TrainTail,
    PreviousBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockResult<T> {
    /// 1-based.
    pub block: usize,
    pub n: usize,
    pub full_rmse: T,
    pub static_curve: AbstentionCurve<T>,
    pub adaptive_curve: Option<AbstentionCurve<T>>,
    pub window: Option<WindowSource>,
    pub merges: Option<usize>,
}

/// Cases of one sequential stream: prediction, actual, confidence.
#[derive(Debug, Clone, Copy)]
pub struct StreamView<'a, T> {
    pub predicted: &'a [T],
    pub actual: &'a [T],
    pub confidence: &'a [T],
}

impl<'a, T: Scalar> StreamView<'a, T> {
    pub fn new(predicted: &'a [T], actual: &'a [T], confidence: &'a [T]) -> Result<Self> {
        if predicted.len() != actual.len() || predicted.len() != confidence.len() {
            return Err(Error::LengthMismatch {
                left: predicted.len(),
                right: actual.len().min(confidence.len()),
            });
        }
        Ok(Self {
            predicted,
            actual,
            confidence,
        })
    }

    fn len(&self) -> usize {
        self.predicted.len()
    }

    fn slice(&self, lo: usize, hi: usize) -> StreamView<'a, T> {
        StreamView {
            predicted: &self.predicted[lo..hi],
            actual: &self.actual[lo..hi],
            confidence: &self.confidence[lo..hi],
        }
    }

    fn abs_errors(&self) -> Vec<T> {
        self.predicted
            .iter()
            .zip(self.actual)
            .map(|(&p, &a)| (a - p).abs())
            .collect()
    }
}

pub const MIN_BLOCK_SIZE: usize = 1000;

/// Splits the time-ordered test stream into `n_blocks` consecutive blocks.
/// The static gate abstains on the lowest-confidence cases of each block.
/// The adaptive gate recalibrates on the preceding window: the train tail
/// for block 1, the previous block afterwards. With one block only the
/// static gate runs.
pub fn block_experiment<T: Scalar>(
    test: StreamView<'_, T>,
    train_tail: StreamView<'_, T>,
    n_blocks: usize,
    config: &RecalConfig,
    fractions: &[f64],
) -> Result<Vec<BlockResult<T>>> {
    if n_blocks == 0 {
        return Err(Error::InvalidArgument("n_blocks must be >= 1".into()));
    }
    let n = test.len();
    if n < n_blocks * MIN_BLOCK_SIZE {
        return Err(Error::InvalidArgument(format!(
            "{n} test cases are too few for {n_blocks} blocks of at least {MIN_BLOCK_SIZE}"
        )));
    }
    let mut out = Vec::with_capacity(n_blocks);
    for k in 0..n_blocks {
        let block = test.slice(k * n / n_blocks, (k + 1) * n / n_blocks);
        let static_curve = abstention_curve(block.predicted, block.actual, block.confidence, fractions)?;
        let (adaptive_curve, window, merges) = if n_blocks == 1 {
            (None, None, None)
        } else {
            let (win, src) = if k == 0 {
                (train_tail, WindowSource::TrainTail)
            } else {
                (test.slice((k - 1) * n / n_blocks, k * n / n_blocks), WindowSource::PreviousBlock)
            };
            let state = recalibrate(win.confidence, &win.abs_errors(), config)?;
            let order = state.drop_order(block.confidence);
            let curve = abstention_curve_by_order(block.predicted, block.actual, &order, fractions)?;
            (Some(curve), Some(src), Some(state.merges))
        };
        out.push(BlockResult {
            block: k + 1,
            n: block.len(),
            full_rmse: rmse(block.predicted, block.actual)?,
            static_curve,
            adaptive_curve,
            window,
            merges,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn aligned_window_needs_no_merge() {
        let conf: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let err: Vec<f64> = (0..100).map(|k| 2.0 - k as f64 / 100.0).collect();
        let s = recalibrate(&conf, &err, &RecalConfig::default()).unwrap();
        assert_eq!(s.merges, 0);
        assert_eq!(s.tiers.len(), 10);
        // median error 1.505; tier 4 has 1.555, tier 5 has 1.455 and
        // starts at the 0.5 quantile of 0..99
        assert_eq!(s.threshold, Some(49.5));
    }

    #[test]
    fn inverted_pair_merges_into_one_tier() {
        let conf = [0.0f64, 0.0, 1.0, 1.0];
        let err = [0.1, 0.1, 0.9, 0.9];
        let s = recalibrate(&conf, &err, &RecalConfig { n_bins: 2, alpha: 0.5 }).unwrap();
        assert_eq!(s.tiers, vec![vec![0, 1]]);
        assert_eq!(s.merges, 1);
    }

    #[test]
    fn never_act_when_no_tier_meets_alpha() {
        let conf = [0.0f64, 1.0, 2.0, 3.0];
        let err = [0.5, 0.5, 0.5, 0.5];
        let s = recalibrate(&conf, &err, &RecalConfig { n_bins: 2, alpha: 0.0 }).unwrap();
        assert!(s.threshold.is_some());
        let err = [0.9, 0.8, 0.6, 0.5];
        let s = recalibrate(&conf, &err, &RecalConfig { n_bins: 2, alpha: 0.0 }).unwrap();
        assert!((s.tier_mae[0] - 0.85).abs() < 1e-12 && (s.tier_mae[1] - 0.55).abs() < 1e-12);
        assert_eq!(s.threshold, None);
    }

    /// Identity window: the fine-bin qualities are exactly the block's own.
    #[test]
    fn self_window_reproduces_block_mapping() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let conf: Vec<f64> = (0..2000).map(|_| rng.random_range(0..30) as f64).collect();
        let err: Vec<f64> = conf.iter().map(|c| rng.random::<f64>() * 2.0 / (1.0 + c)).collect();
        let s = recalibrate(&conf, &err, &RecalConfig::default()).unwrap();
        for b in 0..s.edges.len() {
            let members: Vec<usize> = (0..conf.len()).filter(|&k| s.bin_of(conf[k]) == b).collect();
            let mae = members.iter().map(|&k| err[k]).sum::<f64>() / members.len() as f64;
            assert_eq!(s.bin_counts[b], members.len());
            assert!((s.bin_mae[b].unwrap() - mae).abs() < 1e-12);
        }
    }

    #[test]
    fn single_block_skips_adaptive() {
        let p = vec![3.0f64; 1200];
        let a: Vec<f64> = (0..1200).map(|k| 1.0 + (k % 5) as f64).collect();
        let c: Vec<f64> = (0..1200).map(|k| (k % 7) as f64).collect();
        let v = StreamView::new(&p, &a, &c).unwrap();
        let r = block_experiment(v, v, 1, &RecalConfig::default(), &crate::diagnostics::DEFAULT_FRACTIONS).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].adaptive_curve.is_none());
    }

    #[test]
    fn undersized_stream_rejected() {
        let p = vec![3.0f64; 100];
        let v = StreamView::new(&p, &p, &p).unwrap();
        assert!(block_experiment(v, v, 2, &RecalConfig::default(), &[0.0]).is_err());
    }

    /// Merge oracle working on raw case lists: repeatedly find the lowest
    /// tier whose mean error is below the pooled error of everything above
    /// it and fuse it with its upper neighbour.
    fn oracle_tiers(bins: &[Vec<f64>]) -> Vec<Vec<usize>> {
        let mut tiers: Vec<Vec<usize>> = (0..bins.len()).filter(|&b| !bins[b].is_empty()).map(|b| vec![b]).collect();
        loop {
            let cases = |t: &[usize]| -> Vec<f64> { t.iter().flat_map(|&b| bins[b].iter().copied()).collect() };
            let mut hit = None;
            for i in 0..tiers.len().saturating_sub(1) {
                let own = cases(&tiers[i]);
                let tail: Vec<f64> = tiers[i + 1..].iter().flat_map(|t| cases(t)).collect();
                // dyadic errors: sums and cross products are exact
                let so = own.iter().sum::<f64>();
                let st = tail.iter().sum::<f64>();
                if so * (tail.len() as f64) < st * (own.len() as f64) {
                    hit = Some(i);
                    break;
                }
            }
            match hit {
                Some(i) => {
                    let up = tiers.remove(i + 1);
                    tiers[i].extend(up);
                }
                None => return tiers,
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn merge_matches_oracle_and_leaves_no_inversion(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let conf: Vec<f64> = (0..500).map(|_| rng.random_range(0..1000) as f64).collect();
            let err: Vec<f64> = (0..500).map(|_| rng.random_range(0..128) as f64 / 64.0).collect();
            let s = recalibrate(&conf, &err, &RecalConfig::default()).unwrap();
            let mut bins = vec![Vec::new(); s.edges.len()];
            for (&c, &e) in conf.iter().zip(&err) {
                bins[s.bin_of(c)].push(e);
            }
            let oracle = oracle_tiers(&bins);
            let got: Vec<Vec<usize>> = s
                .tiers
                .iter()
                .map(|t| t.iter().copied().filter(|&b| !bins[b].is_empty()).collect())
                .collect();
            prop_assert_eq!(got, oracle);
            let stats: Vec<(f64, usize)> = s.tier_mae.iter().zip(&s.tier_counts).map(|(&m, &n)| (m * n as f64, n)).collect();
            prop_assert!(tail_inversions(&stats, QualityMode::Error).is_empty());
        }
    }
}
