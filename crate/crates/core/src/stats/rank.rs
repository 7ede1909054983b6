use std::cmp::Ordering;

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Two paired sequences of equal length with no NaN entries.
#[derive(Debug, Clone, Copy)]
pub struct PairedSample<'a, T> {
    x: &'a [T],
    y: &'a [T],
}

impl<'a, T: Scalar> PairedSample<'a, T> {
    pub fn new(x: &'a [T], y: &'a [T]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "paired sample needs at least 2 points, got {}",
                x.len()
            )));
        }
        if x.iter().chain(y).any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("paired sample contains NaN".into()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &'a [T] {
        self.x
    }

    pub fn y(&self) -> &'a [T] {
        self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RankCorrelation<T> {
    pub coefficient: T,
    pub p_value: T,
}

fn total_cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// 1-based ranks with ties replaced by the average of the ranks they span.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&values[a], &values[b]));
    let mut ranks = vec![T::zero(); values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = T::of((start + 1 + end) as f64 / 2.0);
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    let n = T::of_usize(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one()))
}

/// Spearman rank correlation with a two-sided p-value from the t approximation.
pub fn spearman<T: Scalar>(sample: PairedSample<'_, T>) -> Result<RankCorrelation<T>> {
    let n = sample.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "spearman needs n >= 3, got {n}"
        )));
    }
    let rx = average_ranks(sample.x);
    let ry = average_ranks(sample.y);
    let rho = pearson(&rx, &ry)
        .ok_or_else(|| Error::Degenerate("spearman: a sequence is constant".into()))?;
    let r = rho.f64();
    let df = (n - 2) as f64;
    let p = if (1.0 - r.abs()) <= 1e-15 {
        0.0
    } else {
        let t = r * (df / ((1.0 - r) * (1.0 + r))).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(RankCorrelation {
        coefficient: rho,
        p_value: T::of(p),
    })
}

/// Sum over tie groups of `t(t-1)/2`, plus the two variance helper sums.
fn tie_sums<T: PartialEq>(sorted: &[T]) -> (u64, f64, f64, f64) {
    let mut pairs = 0u64;
    let (mut v0, mut v1, mut v2) = (0.0, 0.0, 0.0);
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] == sorted[start] {
            end += 1;
        }
        let t = (end - start) as u64;
        pairs += t * (t - 1) / 2;
        let tf = t as f64;
        v0 += tf * (tf - 1.0) * (2.0 * tf + 5.0);
        v1 += tf * (tf - 1.0);
        v2 += tf * (tf - 1.0) * (tf - 2.0);
        start = end;
    }
    (pairs, v0, v1, v2)
}

/// Counts inversions while merge-sorting `v` ascending.
fn merge_count<T: Scalar>(v: &mut [T], buf: &mut Vec<T>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        merge_count(l, buf) + merge_count(r, buf)
    };
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall tau-b in O(n log n) with a normal-approximation p-value.
pub fn kendall_tau<T: Scalar>(sample: PairedSample<'_, T>) -> Result<RankCorrelation<T>> {
    let n = sample.len();
    let mut pairs: Vec<(T, T)> = sample.x.iter().copied().zip(sample.y.iter().copied()).collect();
    pairs.sort_by(|a, b| total_cmp(&a.0, &b.0).then(total_cmp(&a.1, &b.1)));

    let xs: Vec<T> = pairs.iter().map(|p| p.0).collect();
    let (ties_x, vx0, vx1, vx2) = tie_sums(&xs);
    let (ties_xy, ..) = tie_sums(&pairs);

    let mut ys: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(n);
    let discordant = merge_count(&mut ys, &mut buf);
    let (ties_y, vy0, vy1, vy2) = tie_sums(&ys);

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    if n0 == ties_x || n0 == ties_y {
        return Err(Error::Degenerate("kendall: a sequence is constant".into()));
    }
    let s = n0 as i64 - ties_x as i64 - ties_y as i64 + ties_xy as i64 - 2 * discordant as i64;
    let denom = (((n0 - ties_x) as f64) * ((n0 - ties_y) as f64)).sqrt();
    let tau = (s as f64 / denom).clamp(-1.0, 1.0);

    let nf = n as f64;
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - vx0 - vy0) / 18.0
        + vx1 * vy1 / (2.0 * nf * (nf - 1.0))
        + if n > 2 {
            vx2 * vy2 / (9.0 * nf * (nf - 1.0) * (nf - 2.0))
        } else {
            0.0
        };
    let p = if var > 0.0 {
        let z = s as f64 / var.sqrt();
        let norm = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * norm.sf(z.abs())).min(1.0)
    } else {
        1.0
    };
    Ok(RankCorrelation {
        coefficient: T::of(tau),
        p_value: T::of(p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_tau_b(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = (x[i] - x[j]).signum() * if x[i] == x[j] { 0.0 } else { 1.0 };
                let dy = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
                match (dx == 0.0, dy == 0.0) {
                    (true, true) => {}
                    (true, false) => tx += 1,
                    (false, true) => ty += 1,
                    (false, false) => {
                        if dx * dy > 0.0 {
                            c += 1
                        } else {
                            d += 1
                        }
                    }
                }
            }
        }
        (c - d) as f64 / (((c + d + tx) as f64) * ((c + d + ty) as f64)).sqrt()
    }

    #[test]
    fn spearman_perfect_monotone_and_antitone() {
        let x = [1.0f64, 2.0, 3.0];
        let up = spearman(PairedSample::new(&x, &[10.0, 20.0, 30.0]).unwrap()).unwrap();
        let down = spearman(PairedSample::new(&x, &[30.0, 20.0, 10.0]).unwrap()).unwrap();
        assert!((up.coefficient - 1.0).abs() < 1e-15);
        assert!((down.coefficient + 1.0).abs() < 1e-15);
    }

    #[test]
    fn spearman_rejects_constant_sequence() {
        let x = [1.0, 2.0, 3.0];
        let err = spearman(PairedSample::new(&x, &[5.0, 5.0, 5.0]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn spearman_needs_three_points() {
        assert!(spearman(PairedSample::new(&[1.0, 2.0], &[1.0, 2.0]).unwrap()).is_err());
    }

    #[test]
    fn kendall_trivial_cases() {
        let t = kendall_tau(PairedSample::new(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(t.coefficient, 1.0);
        let t = kendall_tau(PairedSample::new(&[1.0, 2.0], &[2.0, 1.0]).unwrap()).unwrap();
        assert_eq!(t.coefficient, -1.0);
    }

    #[test]
    fn kendall_one_discordant_pair_matches_enumeration() {
        let x = [1.0f64, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0f64, 2.0, 4.0, 3.0, 5.0];
        let t = kendall_tau(PairedSample::new(&x, &y).unwrap()).unwrap();
        // 9 concordant, 1 discordant out of 10 pairs
        assert!((t.coefficient - 0.8).abs() < 1e-15);
        assert!((t.coefficient - brute_tau_b(&x, &y)).abs() < 1e-15);
    }

    #[test]
    fn kendall_p_value_matches_reference_without_ties() {
        // n = 10, S = 45 - 2*1: z = 43 / sqrt(10*9*25/18)
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let mut y = x.clone();
        y.swap(3, 4);
        let t = kendall_tau(PairedSample::new(&x, &y).unwrap()).unwrap();
        let z = 43.0 / (10.0f64 * 9.0 * 25.0 / 18.0).sqrt();
        let p = 2.0 * Normal::new(0.0, 1.0).unwrap().sf(z);
        assert!((t.p_value - p).abs() < 1e-14);
    }

    #[test]
    fn average_ranks_split_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    proptest! {
        #[test]
        fn kendall_matches_brute_force(
            pts in prop::collection::vec((0u8..6, 0u8..6), 3..40)
        ) {
            let x: Vec<f64> = pts.iter().map(|p| f64::from(p.0)).collect();
            let y: Vec<f64> = pts.iter().map(|p| f64::from(p.1)).collect();
            let s = PairedSample::new(&x, &y).unwrap();
            match kendall_tau(s) {
                Ok(t) => prop_assert!((t.coefficient - brute_tau_b(&x, &y)).abs() < 1e-12),
                Err(_) => prop_assert!(x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0])),
            }
        }

        #[test]
        fn rank_correlations_invariant_under_exp(
            pts in prop::collection::vec((-3.0f64..3.0, 0u8..5), 4..60)
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| f64::from(p.1)).collect();
            let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let a = spearman(PairedSample::new(&x, &y).unwrap());
            let b = spearman(PairedSample::new(&ex, &y).unwrap());
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert!((a.coefficient - b.coefficient).abs() <= 1e-12);
            }
            let a = kendall_tau(PairedSample::new(&x, &y).unwrap());
            let b = kendall_tau(PairedSample::new(&ex, &y).unwrap());
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert!((a.coefficient - b.coefficient).abs() <= 1e-12);
            }
        }

        #[test]
        fn rank_correlations_invariant_under_joint_permutation(
            pts in prop::collection::vec((0u8..8, 0u8..8), 4..40),
            seed in any::<u64>()
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let x: Vec<f64> = pts.iter().map(|p| f64::from(p.0)).collect();
            let y: Vec<f64> = pts.iter().map(|p| f64::from(p.1)).collect();
            let px: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
            let py: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
            let a = spearman(PairedSample::new(&x, &y).unwrap()).ok();
            let b = spearman(PairedSample::new(&px, &py).unwrap()).ok();
            prop_assert_eq!(a.map(|r| r.coefficient.to_bits()).is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a.coefficient - b.coefficient).abs() <= 1e-12);
            }
            let a = kendall_tau(PairedSample::new(&x, &y).unwrap()).ok();
            let b = kendall_tau(PairedSample::new(&px, &py).unwrap()).ok();
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert_eq!(a.coefficient, b.coefficient);
                prop_assert_eq!(a.p_value, b.p_value);
            }
        }
    }
}
