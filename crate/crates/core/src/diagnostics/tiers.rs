use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{chi_squared_independence, ChiSquared};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tier {
    High,
    Med,
    Low,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::High, Tier::Med, Tier::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::High => "HIGH",
            Tier::Med => "MED",
            Tier::Low => "LOW",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HIGH" => Ok(Tier::High),
            "MED" | "MEDIUM" => Ok(Tier::Med),
            "LOW" => Ok(Tier::Low),
            other => Err(Error::InvalidArgument(format!("unknown tier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TierStat {
    pub tier: Tier,
    pub count: usize,
    pub positives: usize,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TierReport {
    pub tiers: Vec<TierStat>,
    /// HIGH rate over MED rate; `None` when MED is empty or has rate 0.
    pub high_over_med: Option<f64>,
    /// Strict HIGH > MED > LOW over the nonempty tiers.
    pub monotonic: bool,
    /// `None` when the contingency table is degenerate.
    pub chi_squared: Option<ChiSquared<f64>>,
}

impl TierReport {
    pub fn stat(&self, tier: Tier) -> &TierStat {
        self.tiers.iter().find(|s| s.tier == tier).expect("all tiers present")
    }
}

pub fn tier_report(tiers: &[Tier], outcomes: &[bool]) -> Result<TierReport> {
    if tiers.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            left: tiers.len(),
            right: outcomes.len(),
        });
    }
    if tiers.is_empty() {
        return Err(Error::Empty("tier report input"));
    }
    let stats: Vec<TierStat> = Tier::ALL
        .iter()
        .map(|&t| {
            let (count, positives) = tiers
                .iter()
                .zip(outcomes)
                .filter(|(x, _)| **x == t)
                .fold((0, 0), |(c, p), (_, &o)| (c + 1, p + o as usize));
            TierStat {
                tier: t,
                count,
                positives,
                rate: (count > 0).then(|| positives as f64 / count as f64),
            }
        })
        .collect();
    let rate = |t: Tier| stats.iter().find(|s| s.tier == t).and_then(|s| s.rate);
    let high_over_med = match (rate(Tier::High), rate(Tier::Med)) {
        (Some(h), Some(m)) if m > 0.0 => Some(h / m),
        _ => None,
    };
    let present: Vec<f64> = stats.iter().filter_map(|s| s.rate).collect();
    let monotonic = present.len() >= 2 && present.windows(2).all(|w| w[0] > w[1]);
    let table: Vec<Vec<f64>> = stats
        .iter()
        .filter(|s| s.count > 0)
        .map(|s| vec![s.positives as f64, (s.count - s.positives) as f64])
        .collect();
    let chi_squared = if table.len() >= 2 {
        chi_squared_independence(&table).ok()
    } else {
        None
    };
    Ok(TierReport {
        tiers: stats,
        high_over_med,
        monotonic,
        chi_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn expand(spec: &[(Tier, usize, usize)]) -> (Vec<Tier>, Vec<bool>) {
        let mut t = Vec::new();
        let mut o = Vec::new();
        for &(tier, n, pos) in spec {
            for k in 0..n {
                t.push(tier);
                o.push(k < pos);
            }
        }
        (t, o)
    }

    #[test]
    fn lift_from_rates() {
        let (t, o) = expand(&[(Tier::High, 1000, 44), (Tier::Med, 1000, 9), (Tier::Low, 1000, 2)]);
        let r = tier_report(&t, &o).unwrap();
        assert!((r.high_over_med.unwrap() - 44.0 / 9.0).abs() < 1e-12);
        assert!(r.monotonic);
        assert!(r.chi_squared.unwrap().p_value < 1e-6);
    }

    #[test]
    fn equal_rates_not_monotone() {
        let (t, o) = expand(&[(Tier::High, 100, 10), (Tier::Med, 100, 10), (Tier::Low, 100, 10)]);
        let r = tier_report(&t, &o).unwrap();
        assert!(!r.monotonic);
        assert!((r.chi_squared.unwrap().p_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_med_leaves_lift_undefined() {
        let (t, o) = expand(&[(Tier::High, 10, 3), (Tier::Low, 10, 1)]);
        let r = tier_report(&t, &o).unwrap();
        assert_eq!(r.high_over_med, None);
        assert_eq!(r.stat(Tier::Med).rate, None);
    }

    #[test]
    fn random_tiers_are_rarely_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut significant = 0;
        for _ in 0..200 {
            let t: Vec<Tier> = (0..300).map(|_| Tier::ALL[rng.random_range(0..3)]).collect();
            let o: Vec<bool> = (0..300).map(|_| rng.random::<f64>() < 0.3).collect();
            if tier_report(&t, &o).unwrap().chi_squared.unwrap().p_value < 0.05 {
                significant += 1;
            }
        }
        // about 10 expected under uniform p-values
        assert!(significant <= 22, "{significant}");
    }

    #[test]
    fn tier_names_parse() {
        assert_eq!("medium".parse::<Tier>().unwrap(), Tier::Med);
        assert!("x".parse::<Tier>().is_err());
    }
}
