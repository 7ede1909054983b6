//! Simulated rating worlds `Y = f(x) + g(x, t) + ε` with a controllable
//! split between structural error (few observations of `f`) and contextual
//! error (drift `g` after training ends).
//!
//! Generative law:
//!
//! * `f(u, i) = f_offset + f_scale · ⟨U_u, V_i⟩ / √rank` with standard normal
//!   factors.
//! * Every pair gets `c` train draws, `P(c) ∝ c^(−count_exponent)` on
//!   `1..=max_count`, at uniform times in `[0, train_horizon)`; each draw is
//!   `f + N(0, structural_noise²)`.
//! * `g` is zero during training and then a random walk with
//!   `N(0, drift_sigma²)` steps per time unit.
//! * The pair's single test value is observed `gap ~ U{min_test_gap..=max_test_gap}`
//!   units after training ends: `f + g(gap) + N(0, obs_noise²)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{RatingRecord, MAX_RATING, MIN_RATING};
use crate::diagnostics::{abstention_curve, AbstentionCurve};
use crate::error::{Error, Result};

/// Seconds per simulated time unit in exported records.
pub const EXPORT_TIME_UNIT: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub rank: usize,
    pub f_offset: f64,
    pub f_scale: f64,
    pub count_exponent: f64,
    pub max_count: usize,
    pub structural_noise: f64,
    pub drift_sigma: f64,
    pub train_horizon: i64,
    pub min_test_gap: i64,
    pub max_test_gap: i64,
    pub obs_noise: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            n_users: 100,
            n_items: 100,
            rank: 5,
            f_offset: 3.0,
            f_scale: 0.5,
            count_exponent: 2.0,
            max_count: 100,
            structural_noise: 1.0,
            drift_sigma: 0.0,
            train_horizon: 1000,
            min_test_gap: 1,
            max_test_gap: 100,
            obs_noise: 0.25,
            seed: 0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("world spec: {m}")));
        if self.n_users * self.n_items < 100 {
            return bad("n_users * n_items must be at least 100");
        }
        if self.rank == 0 || self.max_count == 0 {
            return bad("rank and max_count must be >= 1");
        }
        for (name, v) in [
            ("f_scale", self.f_scale),
            ("count_exponent", self.count_exponent),
            ("structural_noise", self.structural_noise),
            ("drift_sigma", self.drift_sigma),
            ("obs_noise", self.obs_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be finite and >= 0"));
            }
        }
        if self.train_horizon < 1 || self.min_test_gap < 1 || self.max_test_gap < self.min_test_gap {
            return bad("need train_horizon >= 1 and 1 <= min_test_gap <= max_test_gap");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_drift(mut self, sigma: f64) -> Self {
        self.drift_sigma = sigma;
        self
    }

    fn count_pmf(&self) -> Vec<f64> {
        let w: Vec<f64> = (1..=self.max_count)
            .map(|c| (c as f64).powf(-self.count_exponent))
            .collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }

    /// Expected squared error of a per-pair mean: `σ_s² · E[1/c]`.
    pub fn structural_mse(&self) -> f64 {
        let e_inv: f64 = self
            .count_pmf()
            .iter()
            .enumerate()
            .map(|(k, p)| p / (k + 1) as f64)
            .sum();
        self.structural_noise.powi(2) * e_inv
    }

    /// `Var(g)` at test time: `σ_g² · E[gap]`.
    pub fn drift_variance(&self) -> f64 {
        self.drift_sigma.powi(2) * (self.min_test_gap + self.max_test_gap) as f64 / 2.0
    }

    /// Contextual regime when `Var(g) >= 10 ·` structural MSE.
    pub fn contextual_ratio(&self) -> f64 {
        let s = self.structural_mse();
        if s == 0.0 {
            f64::INFINITY
        } else {
            self.drift_variance() / s
        }
    }

    pub fn is_contextual(&self) -> bool {
        self.contextual_ratio() >= 10.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub user: u32,
    pub item: u32,
    pub time: i64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTruth {
    pub user: u32,
    pub item: u32,
    pub f: f64,
    pub count: usize,
    pub last_train_time: i64,
    pub test_time: i64,
    /// Realized drift path at times `train_horizon + 1 ..= test_time`.
    pub g_path: Vec<f64>,
    pub test_value: f64,
    /// Per-pair mean of the train draws.
    pub estimate: f64,
}

impl PairTruth {
    pub fn g_test(&self) -> f64 {
        self.g_path.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticWorld {
    pub spec: WorldSpec,
    pub pairs: Vec<PairTruth>,
    pub train: Vec<Observation>,
}

fn sample_count(pmf_cdf: &[f64], u: f64) -> usize {
    pmf_cdf.partition_point(|&c| c < u).min(pmf_cdf.len() - 1) + 1
}

/// Mean shifted by the first element so identical values reproduce it exactly.
fn stable_mean(v: &[f64]) -> f64 {
    let base = v[0];
    base + v.iter().map(|x| x - base).sum::<f64>() / v.len() as f64
}

pub fn generate(spec: &WorldSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let k = spec.rank;
    let uf: Vec<Vec<f64>> = (0..spec.n_users).map(|_| (0..k).map(|_| normal(&mut rng)).collect()).collect();
    let vf: Vec<Vec<f64>> = (0..spec.n_items).map(|_| (0..k).map(|_| normal(&mut rng)).collect()).collect();
    let mut cdf = spec.count_pmf();
    for j in 1..cdf.len() {
        cdf[j] += cdf[j - 1];
    }
    let scale = spec.f_scale / (k as f64).sqrt();
    let mut pairs = Vec::with_capacity(spec.n_users * spec.n_items);
    let mut train = Vec::new();
    for (u, uu) in uf.iter().enumerate() {
        for (i, vv) in vf.iter().enumerate() {
            let f = spec.f_offset + scale * uu.iter().zip(vv).map(|(a, b)| a * b).sum::<f64>();
            let count = sample_count(&cdf, rng.random::<f64>());
            let mut times: Vec<i64> = (0..count).map(|_| rng.random_range(0..spec.train_horizon)).collect();
            times.sort_unstable();
            let values: Vec<f64> = times
                .iter()
                .map(|_| f + spec.structural_noise * normal(&mut rng))
                .collect();
            let gap = rng.random_range(spec.min_test_gap..=spec.max_test_gap);
            let mut g = 0.0;
            let g_path: Vec<f64> = (0..gap)
                .map(|_| {
                    g += spec.drift_sigma * normal(&mut rng);
                    g
                })
                .collect();
            let test_value = f + g + spec.obs_noise * normal(&mut rng);
            for (&t, &v) in times.iter().zip(&values) {
                train.push(Observation {
                    user: u as u32,
                    item: i as u32,
                    time: t,
                    value: v,
                });
            }
            pairs.push(PairTruth {
                user: u as u32,
                item: i as u32,
                f,
                count,
                last_train_time: *times.last().expect("count >= 1"),
                test_time: spec.train_horizon + gap,
                g_path,
                test_value,
                estimate: stable_mean(&values),
            });
        }
    }
    Ok(SyntheticWorld { spec: *spec, pairs, train })
}

impl SyntheticWorld {
    pub fn predictions(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.estimate).collect()
    }

    pub fn actuals(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.test_value).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.count).collect()
    }

    /// Count min-max normalized over the pairs; all-equal counts give zeros
    /// and `true`.
    pub fn count_confidence(&self) -> (Vec<f64>, bool) {
        let lo = self.pairs.iter().map(|p| p.count).min().unwrap_or(0);
        let hi = self.pairs.iter().map(|p| p.count).max().unwrap_or(0);
        if hi == lo {
            return (vec![0.0; self.pairs.len()], true);
        }
        let span = (hi - lo) as f64;
        (self.pairs.iter().map(|p| (p.count - lo) as f64 / span).collect(), false)
    }

    /// Negated true standard error of each pair's estimate.
    pub fn standard_error_confidence(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|p| -self.spec.structural_noise / (p.count as f64).sqrt())
            .collect()
    }

    /// Negated time since the pair was last observed.
    pub fn staleness_confidence(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|p| -((p.test_time - p.last_train_time) as f64))
            .collect()
    }

    /// Negated realized |g| at test time.
    pub fn drift_oracle_confidence(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| -p.g_test().abs()).collect()
    }

    /// Train and test sides as rating records: values clamped to the rating
    /// scale, times in seconds.
    pub fn to_records(&self) -> (Vec<RatingRecord>, Vec<RatingRecord>) {
        let clamp = |v: f64| v.clamp(MIN_RATING, MAX_RATING);
        let train = self
            .train
            .iter()
            .map(|o| RatingRecord {
                user: o.user,
                item: o.item,
                rating: clamp(o.value),
                timestamp: o.time * EXPORT_TIME_UNIT,
            })
            .collect();
        let test = self
            .pairs
            .iter()
            .map(|p| RatingRecord {
                user: p.user,
                item: p.item,
                rating: clamp(p.test_value),
                timestamp: p.test_time * EXPORT_TIME_UNIT,
            })
            .collect();
        (train, test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralOutcome {
    pub seed: u64,
    pub count_curve: AbstentionCurve<f64>,
    pub oracle_curve: AbstentionCurve<f64>,
    pub warnings: Vec<String>,
}

pub fn structural_experiment(spec: &WorldSpec, fractions: &[f64]) -> Result<StructuralOutcome> {
    let w = generate(spec)?;
    let (p, a) = (w.predictions(), w.actuals());
    let (count, degenerate) = w.count_confidence();
    let mut warnings = Vec::new();
    if spec.drift_sigma != 0.0 {
        warnings.push(format!("drift_sigma = {} is not a structural regime", spec.drift_sigma));
    }
    if degenerate {
        warnings.push("all observation counts are identical; signal is degenerate".into());
    }
    Ok(StructuralOutcome {
        seed: spec.seed,
        count_curve: abstention_curve(&p, &a, &count, fractions)?,
        oracle_curve: abstention_curve(&p, &a, &w.standard_error_confidence(), fractions)?,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextualOutcome {
    pub seed: u64,
    pub contextual_ratio: f64,
    pub count_curve: AbstentionCurve<f64>,
    pub recency_curve: AbstentionCurve<f64>,
    pub oracle_curve: AbstentionCurve<f64>,
    pub warnings: Vec<String>,
}

pub fn contextual_experiment(spec: &WorldSpec, fractions: &[f64]) -> Result<ContextualOutcome> {
    let w = generate(spec)?;
    let (p, a) = (w.predictions(), w.actuals());
    let (count, degenerate) = w.count_confidence();
    let mut warnings = Vec::new();
    if !spec.is_contextual() {
        warnings.push(format!(
            "Var(g) / structural MSE = {:.3} is below 10; not a contextual regime",
            spec.contextual_ratio()
        ));
    }
    if degenerate {
        warnings.push("all observation counts are identical; signal is degenerate".into());
    }
    Ok(ContextualOutcome {
        seed: spec.seed,
        contextual_ratio: spec.contextual_ratio(),
        count_curve: abstention_curve(&p, &a, &count, fractions)?,
        recency_curve: abstention_curve(&p, &a, &w.staleness_confidence(), fractions)?,
        oracle_curve: abstention_curve(&p, &a, &w.drift_oracle_confidence(), fractions)?,
        warnings,
    })
}

/// Pass thresholds fixed ahead of any run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Preregistration {
    pub n_seeds: u64,
    /// Structural: seeds with zero count-based violations needed to pass.
    pub structural_min_clean: usize,
    /// Contextual: seeds with at least one count-based violation needed.
    pub contextual_min_violating: usize,
}

impl Default for Preregistration {
    fn default() -> Self {
        Self {
            n_seeds: 10,
            structural_min_clean: 9,
            contextual_min_violating: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralSummary {
    pub seeds: Vec<u64>,
    pub count_violations: Vec<usize>,
    pub oracle_violations: Vec<usize>,
    pub clean_seeds: usize,
    pub pass: bool,
    pub runs: Vec<StructuralOutcome>,
}

pub fn structural_over_seeds(
    spec: &WorldSpec,
    seeds: &[u64],
    fractions: &[f64],
    min_clean: usize,
) -> Result<StructuralSummary> {
    let runs: Vec<StructuralOutcome> = seeds
        .par_iter()
        .map(|&s| structural_experiment(&spec.with_seed(s), fractions))
        .collect::<Result<_>>()?;
    let count_violations: Vec<usize> = runs.iter().map(|r| r.count_curve.violation_count).collect();
    let clean_seeds = count_violations.iter().filter(|&&v| v == 0).count();
    Ok(StructuralSummary {
        seeds: seeds.to_vec(),
        oracle_violations: runs.iter().map(|r| r.oracle_curve.violation_count).collect(),
        count_violations,
        clean_seeds,
        pass: clean_seeds >= min_clean,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextualSummary {
    pub seeds: Vec<u64>,
    pub contextual_ratio: f64,
    pub count_violations: Vec<usize>,
    pub recency_violations: Vec<usize>,
    pub oracle_violations: Vec<usize>,
    pub violating_seeds: usize,
    pub pass: bool,
    pub runs: Vec<ContextualOutcome>,
}

pub fn contextual_over_seeds(
    spec: &WorldSpec,
    seeds: &[u64],
    fractions: &[f64],
    min_violating: usize,
) -> Result<ContextualSummary> {
    let runs: Vec<ContextualOutcome> = seeds
        .par_iter()
        .map(|&s| contextual_experiment(&spec.with_seed(s), fractions))
        .collect::<Result<_>>()?;
    let count_violations: Vec<usize> = runs.iter().map(|r| r.count_curve.violation_count).collect();
    let oracle_violations: Vec<usize> = runs.iter().map(|r| r.oracle_curve.violation_count).collect();
    let violating_seeds = count_violations.iter().filter(|&&v| v >= 1).count();
    Ok(ContextualSummary {
        seeds: seeds.to_vec(),
        contextual_ratio: spec.contextual_ratio(),
        recency_violations: runs.iter().map(|r| r.recency_curve.violation_count).collect(),
        pass: violating_seeds >= min_violating && oracle_violations.iter().all(|&v| v == 0),
        count_violations,
        oracle_violations,
        violating_seeds,
        runs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub drift_sigma: f64,
    pub contextual_ratio: f64,
    pub median_count_violations: f64,
}

/// Median count-based violations per drift level, same seeds throughout.
pub fn sigma_sweep(spec: &WorldSpec, sigmas: &[f64], seeds: &[u64], fractions: &[f64]) -> Result<Vec<SweepPoint>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let s = spec.with_drift(sigma);
            let mut v: Vec<usize> = seeds
                .par_iter()
                .map(|&seed| {
                    let w = generate(&s.with_seed(seed))?;
                    let (c, _) = w.count_confidence();
                    Ok(abstention_curve(&w.predictions(), &w.actuals(), &c, fractions)?.violation_count)
                })
                .collect::<Result<_>>()?;
            v.sort_unstable();
            let m = v.len();
            let median = if m == 0 {
                f64::NAN
            } else if m % 2 == 1 {
                v[m / 2] as f64
            } else {
                (v[m / 2 - 1] + v[m / 2]) as f64 / 2.0
            };
            Ok(SweepPoint {
                drift_sigma: sigma,
                contextual_ratio: s.contextual_ratio(),
                median_count_violations: median,
            })
        })
        .collect()
}
