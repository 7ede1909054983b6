//! Rating ingestion, the three distribution-shift splits, and the generic
//! `confidence,outcome` stream.
//!
//! Wire formats:
//!
//! * MovieLens 100K `u.data`: `user \t item \t rating \t timestamp`, one record
//!   per line, ratings in `[1, 5]`.
//! * Rating CSV: header `user_id,item_id,rating,timestamp`, same fields.
//! * Outcome stream: header `confidence,outcome` with an optional third
//!   `tier` column (`HIGH`, `MED`, `LOW`); confidence must lie in `[0, 1]`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::Tier;
use crate::error::{Error, Result};

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub timestamp: i64,
}

impl RatingRecord {
    fn chrono_key(&self) -> (i64, u32, u32) {
        (self.timestamp, self.user, self.item)
    }
}

fn open(path: &Path) -> Result<BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn field<T: FromStr>(raw: Option<&str>, line: usize, name: &str) -> Result<T> {
    let raw = raw.ok_or_else(|| Error::parse(line, format!("missing field `{name}`")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {name} `{}`", raw.trim())))
}

fn check_record(rec: RatingRecord, line: usize) -> Result<RatingRecord> {
    if !(MIN_RATING..=MAX_RATING).contains(&rec.rating) {
        return Err(Error::parse(
            line,
            format!("rating {} outside [{MIN_RATING}, {MAX_RATING}]", rec.rating),
        ));
    }
    if rec.timestamp < 0 {
        return Err(Error::parse(line, format!("negative timestamp {}", rec.timestamp)));
    }
    Ok(rec)
}

/// Parses the MovieLens tab-separated format. Blank lines are skipped.
pub fn parse_movielens(reader: impl BufRead) -> Result<Vec<RatingRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let rec = RatingRecord {
            user: field(parts.next(), lineno, "user")?,
            item: field(parts.next(), lineno, "item")?,
            rating: field(parts.next(), lineno, "rating")?,
            timestamp: field(parts.next(), lineno, "timestamp")?,
        };
        if parts.next().is_some() {
            return Err(Error::parse(lineno, "expected 4 tab-separated fields"));
        }
        out.push(check_record(rec, lineno)?);
    }
    Ok(out)
}

pub fn load_movielens(path: impl AsRef<Path>) -> Result<Vec<RatingRecord>> {
    let path = path.as_ref();
    parse_movielens(open(path)?).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn parse_ratings_csv(reader: impl BufRead) -> Result<Vec<RatingRecord>> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::parse(1, e.to_string()))?
        .unwrap_or_default();
    if header.trim() != "user_id,item_id,rating,timestamp" {
        return Err(Error::parse(
            1,
            "expected header `user_id,item_id,rating,timestamp`",
        ));
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let rec = RatingRecord {
            user: field(parts.next(), lineno, "user_id")?,
            item: field(parts.next(), lineno, "item_id")?,
            rating: field(parts.next(), lineno, "rating")?,
            timestamp: field(parts.next(), lineno, "timestamp")?,
        };
        out.push(check_record(rec, lineno)?);
    }
    Ok(out)
}

/// Loads either format: a file whose first line is the CSV header is read as
/// rating CSV, anything else as MovieLens tab-separated.
pub fn load_ratings(path: impl AsRef<Path>) -> Result<Vec<RatingRecord>> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    if first.trim_start().starts_with("user_id,") {
        parse_ratings_csv(open(path)?)
    } else {
        load_movielens(path)
    }
}

pub fn write_ratings_csv(mut w: impl Write, records: &[RatingRecord]) -> std::io::Result<()> {
    writeln!(w, "user_id,item_id,rating,timestamp")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.user, r.item, r.rating, r.timestamp)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Temporal,
    ColdUser,
    ColdItem,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Temporal, SplitKind::ColdUser, SplitKind::ColdItem];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Temporal => "temporal",
            SplitKind::ColdUser => "cold_user",
            SplitKind::ColdItem => "cold_item",
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temporal" => Ok(SplitKind::Temporal),
            "cold_user" | "cold-user" => Ok(SplitKind::ColdUser),
            "cold_item" | "cold-item" => Ok(SplitKind::ColdItem),
            other => Err(Error::InvalidArgument(format!("unknown split kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub kind: SplitKind,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_test_fraction() -> f64 {
    0.2
}

impl SplitSpec {
    pub fn new(kind: SplitKind) -> Self {
        Self {
            kind,
            test_fraction: default_test_fraction(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_test_fraction(mut self, f: f64) -> Self {
        self.test_fraction = f;
        self
    }
}

/// Train/test partition. Both sides are in chronological order
/// (timestamp, then user, then item); a test case's index is its position in
/// `test`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub spec: SplitSpec,
    pub train: Vec<RatingRecord>,
    pub test: Vec<RatingRecord>,
    pub user_counts: HashMap<u32, usize>,
    pub item_counts: HashMap<u32, usize>,
}

impl SplitDataset {
    pub fn user_count(&self, user: u32) -> usize {
        self.user_counts.get(&user).copied().unwrap_or(0)
    }

    pub fn item_count(&self, item: u32) -> usize {
        self.item_counts.get(&item).copied().unwrap_or(0)
    }

    /// Split-specific observation count: `min(user, item)` for temporal, the
    /// item count for cold-user, the user count for cold-item.
    pub fn observation_count(&self, rec: &RatingRecord) -> usize {
        match self.spec.kind {
            SplitKind::Temporal => self.user_count(rec.user).min(self.item_count(rec.item)),
            SplitKind::ColdUser => self.item_count(rec.item),
            SplitKind::ColdItem => self.user_count(rec.user),
        }
    }
}

fn sort_chrono(records: &mut [RatingRecord]) {
    records.sort_by_key(RatingRecord::chrono_key);
}

pub fn make_split(records: &[RatingRecord], spec: &SplitSpec) -> Result<SplitDataset> {
    if records.is_empty() {
        return Err(Error::Empty("records for split"));
    }
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction {} outside (0, 1)",
            spec.test_fraction
        )));
    }
    let n = records.len();
    let (mut train, mut test) = match spec.kind {
        SplitKind::Temporal => {
            let mut sorted = records.to_vec();
            sort_chrono(&mut sorted);
            let n_test = (spec.test_fraction * n as f64).round() as usize;
            if n_test == 0 || n_test >= n {
                return Err(Error::InvalidArgument(format!(
                    "test_fraction {} leaves an empty side for {n} records",
                    spec.test_fraction
                )));
            }
            let test = sorted.split_off(n - n_test);
            (sorted, test)
        }
        SplitKind::ColdUser | SplitKind::ColdItem => {
            let key = |r: &RatingRecord| match spec.kind {
                SplitKind::ColdUser => r.user,
                _ => r.item,
            };
            let mut per_entity: HashMap<u32, usize> = HashMap::new();
            for r in records {
                *per_entity.entry(key(r)).or_default() += 1;
            }
            let mut ids: Vec<u32> = per_entity.keys().copied().collect::<BTreeSet<_>>().into_iter().collect();
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
            let target = spec.test_fraction * n as f64;
            let mut held = std::collections::HashSet::new();
            let mut acc = 0usize;
            for id in ids {
                if acc as f64 >= target {
                    break;
                }
                acc += per_entity[&id];
                held.insert(id);
            }
            let (test, train): (Vec<_>, Vec<_>) =
                records.iter().partition(|r| held.contains(&key(r)));
            if train.is_empty() || test.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "test_fraction {} leaves an empty side",
                    spec.test_fraction
                )));
            }
            (train, test)
        }
    };
    sort_chrono(&mut train);
    sort_chrono(&mut test);
    let mut user_counts = HashMap::new();
    let mut item_counts = HashMap::new();
    for r in &train {
        *user_counts.entry(r.user).or_default() += 1;
        *item_counts.entry(r.item).or_default() += 1;
    }
    Ok(SplitDataset {
        spec: *spec,
        train,
        test,
        user_counts,
        item_counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeRecord {
    pub confidence: f64,
    pub outcome: f64,
    pub tier: Option<Tier>,
}

pub fn parse_outcome_stream(reader: impl BufRead) -> Result<Vec<OutcomeRecord>> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::parse(1, e.to_string()))?
        .ok_or_else(|| Error::parse(1, "missing header"))?;
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let has_tier = match cols.as_slice() {
        ["confidence", "outcome"] => false,
        ["confidence", "outcome", "tier"] => true,
        _ => {
            return Err(Error::parse(
                1,
                format!("expected header `confidence,outcome[,tier]`, got `{}`", header.trim()),
            ))
        }
    };
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let confidence: f64 = field(parts.next(), lineno, "confidence")?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::parse(
                lineno,
                format!("confidence {confidence} outside [0, 1]"),
            ));
        }
        let outcome: f64 = field(parts.next(), lineno, "outcome")?;
        if !outcome.is_finite() {
            return Err(Error::parse(lineno, "outcome must be finite"));
        }
        let tier = if has_tier {
            Some(field::<Tier>(parts.next(), lineno, "tier")?)
        } else {
            None
        };
        if parts.next().is_some() {
            return Err(Error::parse(lineno, "too many fields"));
        }
        out.push(OutcomeRecord {
            confidence,
            outcome,
            tier,
        });
    }
    Ok(out)
}

pub fn load_outcome_stream(path: impl AsRef<Path>) -> Result<Vec<OutcomeRecord>> {
    parse_outcome_stream(open(path.as_ref())?)
}

/// Writes the stream with shortest round-trip float formatting.
pub fn write_outcome_stream(mut w: impl Write, records: &[OutcomeRecord]) -> std::io::Result<()> {
    let with_tier = records.iter().any(|r| r.tier.is_some());
    if with_tier {
        writeln!(w, "confidence,outcome,tier")?;
    } else {
        writeln!(w, "confidence,outcome")?;
    }
    for r in records {
        if with_tier {
            let tier = r.tier.map(|t| t.as_str()).unwrap_or("");
            writeln!(w, "{},{},{}", r.confidence, r.outcome, tier)?;
        } else {
            writeln!(w, "{},{}", r.confidence, r.outcome)?;
        }
    }
    Ok(())
}
