use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{field_of_usize, ExactField, Scalar};

/// Whether larger outcomes are better (`Accuracy`) or worse (`Error`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityMode {
    Accuracy,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Zone<F> {
    pub lo: F,
    pub hi: F,
    pub count: usize,
    pub sum: F,
    pub mean: F,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneReport<F> {
    pub mode: QualityMode,
    pub bin_edges: Vec<F>,
    pub zones: Vec<Zone<F>>,
    /// Zones whose mean beats the pooled mean of every zone above them.
    pub inversion_count: usize,
    pub inversion_locations: Vec<(usize, usize)>,
    /// Zone i beating zone i + 1 alone; informational.
    pub adjacent_inversions: Vec<(usize, usize)>,
    /// Indices (in the requested binning) of bins that were empty and merged.
    pub merged_empty_bins: Vec<usize>,
}

/// True when `(sum_a / n_a)` is strictly better than `(sum_b / n_b)`.
/// Cross-multiplied so rationals compare exactly.
fn beats<F: ExactField>(mode: QualityMode, sum_a: F, n_a: usize, sum_b: F, n_b: usize) -> bool {
    let lhs = sum_a * field_of_usize(n_b);
    let rhs = sum_b * field_of_usize(n_a);
    match mode {
        QualityMode::Accuracy => lhs > rhs,
        QualityMode::Error => lhs < rhs,
    }
}

/// Indices `i` of the (sum, count) bins, ordered by ascending confidence,
/// whose mean beats the pooled tail `i+1..`. Empty bins are skipped.
pub fn tail_inversions<F: ExactField>(bins: &[(F, usize)], mode: QualityMode) -> Vec<usize> {
    let mut out = Vec::new();
    let mut tail_sum = F::zero();
    let mut tail_n = 0usize;
    for i in (0..bins.len()).rev() {
        let (s, n) = bins[i];
        if n > 0 && tail_n > 0 && beats(mode, s, n, tail_sum, tail_n) {
            out.push(i);
        }
        tail_sum = tail_sum + s;
        tail_n += n;
    }
    out.reverse();
    out
}

fn validate<F: ExactField>(confidence: &[F], outcome: &[F]) -> Result<()> {
    if confidence.len() != outcome.len() {
        return Err(Error::LengthMismatch {
            left: confidence.len(),
            right: outcome.len(),
        });
    }
    if confidence.is_empty() {
        return Err(Error::Empty("zone input"));
    }
    // NaN is the only value unequal to itself
    #[allow(clippy::eq_op)]
    if confidence.iter().chain(outcome).any(|v| v != v) {
        return Err(Error::NonFinite("zone input contains NaN".into()));
    }
    Ok(())
}

/// Zones from explicit increasing edges `e_0 < e_1 < ... < e_m`. A value `c`
/// lands in the last bin `j` with `c >= e_j`; values below `e_0` go to bin 0.
/// Empty bins are merged into their right neighbour (the last into its left).
pub fn check_c2_with_edges<F: ExactField>(
    confidence: &[F],
    outcome: &[F],
    edges: &[F],
    mode: QualityMode,
) -> Result<ZoneReport<F>> {
    validate(confidence, outcome)?;
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("bin edges must be strictly increasing, at least 2".into()));
    }
    let nb = edges.len() - 1;
    let mut sums = vec![F::zero(); nb];
    let mut counts = vec![0usize; nb];
    for (&c, &y) in confidence.iter().zip(outcome) {
        let j = edges[1..nb].partition_point(|e| *e <= c);
        sums[j] = sums[j] + y;
        counts[j] += 1;
    }

    let mut merged_empty_bins = Vec::new();
    let mut zones: Vec<Zone<F>> = Vec::new();
    let mut pending: Option<F> = None;
    for j in 0..nb {
        if counts[j] == 0 {
            merged_empty_bins.push(j);
            pending.get_or_insert(edges[j]);
            continue;
        }
        let lo = pending.take().unwrap_or(edges[j]);
        zones.push(Zone {
            lo,
            hi: edges[j + 1],
            count: counts[j],
            sum: sums[j],
            mean: sums[j] / field_of_usize(counts[j]),
        });
    }
    if pending.is_some() {
        if let Some(last) = zones.last_mut() {
            last.hi = edges[nb];
        }
    }

    let pairs: Vec<(F, usize)> = zones.iter().map(|z| (z.sum, z.count)).collect();
    let inv = tail_inversions(&pairs, mode);
    let adjacent_inversions = (0..zones.len().saturating_sub(1))
        .filter(|&i| beats(mode, pairs[i].0, pairs[i].1, pairs[i + 1].0, pairs[i + 1].1))
        .map(|i| (i, i + 1))
        .collect();
    let mut bin_edges: Vec<F> = zones.iter().map(|z| z.lo).collect();
    bin_edges.extend(zones.last().map(|z| z.hi));
    Ok(ZoneReport {
        mode,
        bin_edges,
        inversion_count: inv.len(),
        inversion_locations: inv.iter().map(|&i| (i, i + 1)).collect(),
        adjacent_inversions,
        zones,
        merged_empty_bins,
    })
}

/// Equal-width zones over the observed confidence range.
pub fn check_c2<T: Scalar>(
    confidence: &[T],
    outcome: &[T],
    n_bins: usize,
    mode: QualityMode,
) -> Result<ZoneReport<T>> {
    validate(confidence, outcome)?;
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be >= 1".into()));
    }
    if confidence.len() < n_bins {
        return Err(Error::InvalidArgument(format!(
            "{} cases cannot fill {n_bins} bins",
            confidence.len()
        )));
    }
    let lo = confidence.iter().copied().fold(T::infinity(), T::min);
    let hi = confidence.iter().copied().fold(T::neg_infinity(), T::max);
    if !(hi > lo) {
        return Err(Error::Degenerate("confidence is constant".into()));
    }
    let width = (hi - lo) / T::of_usize(n_bins);
    let mut edges: Vec<T> = (0..n_bins).map(|j| lo + width * T::of_usize(j)).collect();
    edges.push(hi);
    // guard against rounding collapsing adjacent edges
    edges.dedup_by(|b, a| !(*b > *a));
    check_c2_with_edges(confidence, outcome, &edges, mode)
}

fn distinct_sorted<F: ExactField>(confidence: &[F], outcome: &[F]) -> Vec<(F, F, usize)> {
    let mut idx: Vec<usize> = (0..confidence.len()).collect();
    idx.sort_by(|&a, &b| confidence[a].partial_cmp(&confidence[b]).expect("validated"));
    let mut groups: Vec<(F, F, usize)> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if g.0 == confidence[i] => {
                g.1 = g.1 + outcome[i];
                g.2 += 1;
            }
            _ => groups.push((confidence[i], outcome[i], 1)),
        }
    }
    groups
}

/// Every band `[v_a, v_b)` between distinct confidence values whose mean
/// beats its upper tail `[v_b, ∞)`. Returned as indices into the sorted
/// distinct values.
pub fn band_tail_inversions<F: ExactField>(
    confidence: &[F],
    outcome: &[F],
    mode: QualityMode,
) -> Result<Vec<(usize, usize)>> {
    validate(confidence, outcome)?;
    let g = distinct_sorted(confidence, outcome);
    let m = g.len();
    let mut suffix_sum = vec![F::zero(); m + 1];
    let mut suffix_n = vec![0usize; m + 1];
    for j in (0..m).rev() {
        suffix_sum[j] = suffix_sum[j + 1] + g[j].1;
        suffix_n[j] = suffix_n[j + 1] + g[j].2;
    }
    let mut out = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            let band_sum = suffix_sum[a] - suffix_sum[b];
            let band_n = suffix_n[a] - suffix_n[b];
            if beats(mode, band_sum, band_n, suffix_sum[b], suffix_n[b]) {
                out.push((a, b));
            }
        }
    }
    Ok(out)
}

/// Whether SA(t) = mean outcome over `c >= t` never gets worse as `t` rises
/// through the observed confidence values.
pub fn selective_accuracy_is_monotone<F: ExactField>(
    confidence: &[F],
    outcome: &[F],
    mode: QualityMode,
) -> Result<bool> {
    validate(confidence, outcome)?;
    let g = distinct_sorted(confidence, outcome);
    let mut tail_sum = F::zero();
    let mut tail_n = 0usize;
    let mut prev: Option<(F, usize)> = None;
    for j in (0..g.len()).rev() {
        tail_sum = tail_sum + g[j].1;
        tail_n += g[j].2;
        if let Some((s, n)) = prev {
            // SA at the lower threshold must not beat SA at the higher one
            if beats(mode, tail_sum, tail_n, s, n) {
                return Ok(false);
            }
        }
        prev = Some((tail_sum, tail_n));
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    type Q = Ratio<i64>;

    fn q(n: i64) -> Q {
        Q::from_integer(n)
    }

    #[test]
    fn increasing_zone_means_have_no_inversions() {
        // one case per zone, outcome equal to the zone mean
        let means = [0.231f64, 0.359, 0.648, 0.861, 0.939];
        let conf: Vec<f64> = (0..5).map(|k| k as f64 / 4.0).collect();
        let r = check_c2(&conf, &means, 5, QualityMode::Accuracy).unwrap();
        assert_eq!(r.zones.len(), 5);
        assert_eq!(r.inversion_count, 0);
    }

    #[test]
    fn two_bins_inverted() {
        let conf = [0.0f64, 0.0, 1.0, 1.0];
        let acc = [0.5, 0.5, 0.4, 0.4];
        let r = check_c2(&conf, &acc, 2, QualityMode::Accuracy).unwrap();
        assert_eq!(r.inversion_count, 1);
        assert_eq!(r.inversion_locations, vec![(0, 1)]);
    }

    #[test]
    fn error_mode_reverses_direction() {
        let conf = [0.0f64, 1.0];
        let err = [0.1, 0.5];
        assert_eq!(check_c2(&conf, &err, 2, QualityMode::Error).unwrap().inversion_count, 1);
        assert_eq!(check_c2(&conf, &err, 2, QualityMode::Accuracy).unwrap().inversion_count, 0);
    }

    #[test]
    fn empty_bins_merge_rightward() {
        let conf = [0.0f64, 0.05, 0.95, 1.0];
        let acc = [0.0, 0.0, 1.0, 1.0];
        let r = check_c2(&conf, &acc, 4, QualityMode::Accuracy).unwrap();
        assert_eq!(r.merged_empty_bins, vec![1, 2]);
        assert_eq!(r.zones.len(), 2);
        assert_eq!(r.zones[1].lo, 0.25);
        assert_eq!(r.zones.iter().map(|z| z.count).sum::<usize>(), 4);
    }

    #[test]
    fn constant_confidence_is_degenerate() {
        assert!(matches!(
            check_c2(&[0.5f64; 4], &[1.0, 0.0, 1.0, 0.0], 2, QualityMode::Accuracy),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn tail_not_adjacent_comparison() {
        // bin 1 loses to bin 2 but beats the pooled tail {2, 3}
        let bins = [(q(5), 10), (q(6), 10), (q(7), 10), (q(0), 10)];
        assert_eq!(tail_inversions(&bins, QualityMode::Accuracy), vec![0, 1, 2]);
    }

    fn brute_tail(conf: &[f64], acc: &[f64], edges: &[f64]) -> usize {
        let nb = edges.len() - 1;
        let bin = |c: f64| (1..nb).filter(|&j| c >= edges[j]).count();
        let mut nonempty: Vec<usize> = (0..nb).filter(|&j| conf.iter().any(|&c| bin(c) == j)).collect();
        nonempty.sort();
        let mut count = 0;
        for (k, &j) in nonempty.iter().enumerate() {
            let above = &nonempty[k + 1..];
            if above.is_empty() {
                continue;
            }
            let own: Vec<f64> = conf.iter().zip(acc).filter(|(c, _)| bin(**c) == j).map(|(_, a)| *a).collect();
            let tail: Vec<f64> =
                conf.iter().zip(acc).filter(|(c, _)| above.contains(&bin(**c))).map(|(_, a)| *a).collect();
            let mo = own.iter().sum::<f64>() / own.len() as f64;
            let mt = tail.iter().sum::<f64>() / tail.len() as f64;
            if mo > mt + 1e-12 {
                count += 1;
            }
        }
        count
    }

    proptest! {
        #[test]
        fn random_sample_matches_tail_oracle(
            pts in prop::collection::vec((0u8..=20, any::<bool>()), 200),
            nb in 2usize..8,
        ) {
            let conf: Vec<f64> = pts.iter().map(|p| p.0 as f64 / 20.0).collect();
            let acc: Vec<f64> = pts.iter().map(|p| if p.1 { 1.0 } else { 0.0 }).collect();
            let edges: Vec<f64> = (0..=nb).map(|j| j as f64 / nb as f64).collect();
            let r = check_c2_with_edges(&conf, &acc, &edges, QualityMode::Accuracy).unwrap();
            prop_assert_eq!(r.inversion_count, brute_tail(&conf, &acc, &edges));
            prop_assert_eq!(r.zones.iter().map(|z| z.count).sum::<usize>(), conf.len());
        }

        #[test]
        fn rational_and_float_agree_on_integer_data(
            pts in prop::collection::vec((0i64..6, 0i64..4), 1..50),
        ) {
            let cq: Vec<Q> = pts.iter().map(|p| q(p.0)).collect();
            let aq: Vec<Q> = pts.iter().map(|p| q(p.1)).collect();
            let cf: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
            let af: Vec<f64> = pts.iter().map(|p| p.1 as f64).collect();
            let eq: Vec<Q> = (0..=6).map(q).collect();
            let ef: Vec<f64> = (0..=6).map(|v| v as f64).collect();
            let a = check_c2_with_edges(&cq, &aq, &eq, QualityMode::Accuracy).unwrap();
            let b = check_c2_with_edges(&cf, &af, &ef, QualityMode::Accuracy).unwrap();
            prop_assert_eq!(a.inversion_locations, b.inversion_locations);
        }
    }
}
