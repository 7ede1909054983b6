//! Explicit-feedback matrix factorization trained by alternating least
//! squares, plus the three mean baselines.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{RatingRecord, MAX_RATING, MIN_RATING};
use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::scalar::Scalar;

/// Anything that maps a (user, item) pair to a clipped rating.
pub trait Predictor<T: Scalar> {
    fn predict(&self, user: u32, item: u32) -> T;

    fn predict_all(&self, records: &[RatingRecord]) -> Vec<T> {
        records.iter().map(|r| self.predict(r.user, r.item)).collect()
    }
}

fn clip<T: Scalar>(v: T) -> T {
    v.max(T::of(MIN_RATING)).min(T::of(MAX_RATING))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlsConfig {
    pub rank: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Learn per-user and per-item offsets alongside the factors.
    pub biases: bool,
    /// Scale the ridge penalty of each entity by its rating count.
    pub count_weighted_lambda: bool,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            rank: 10,
            lambda: 0.1,
            iterations: 20,
            seed: 0,
            biases: true,
            count_weighted_lambda: true,
        }
    }
}

impl AlsConfig {
    /// Plain centred factorization: no offsets, unweighted penalty.
    pub fn plain(rank: usize, lambda: f64, iterations: usize, seed: u64) -> Self {
        Self {
            rank,
            lambda,
            iterations,
            seed,
            biases: false,
            count_weighted_lambda: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityTable<T> {
    pub ids: Vec<u32>,
    index: HashMap<u32, usize>,
    pub factors: Vec<Vec<T>>,
    pub bias: Vec<T>,
}

impl<T: Scalar> EntityTable<T> {
    fn new(ids: Vec<u32>, factors: Vec<Vec<T>>, bias: Vec<T>) -> Self {
        let index = ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        Self {
            ids,
            index,
            factors,
            bias,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn factor(&self, id: u32) -> Option<&[T]> {
        self.position(id).map(|k| self.factors[k].as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfModel<T> {
    pub rank: usize,
    pub lambda: f64,
    pub global_mean: T,
    pub users: EntityTable<T>,
    pub items: EntityTable<T>,
}

impl<T: Scalar> MfModel<T> {
    /// Unclipped score: global mean plus offsets plus the factor dot product.
    /// Entities absent from training contribute nothing.
    pub fn raw_score(&self, user: u32, item: u32) -> T {
        let u = self.users.position(user);
        let i = self.items.position(item);
        let mut s = self.global_mean;
        if let Some(u) = u {
            s += self.users.bias[u];
        }
        if let Some(i) = i {
            s += self.items.bias[i];
        }
        if let (Some(u), Some(i)) = (u, i) {
            s += dot(&self.users.factors[u], &self.items.factors[i]);
        }
        s
    }

    fn check_finite(&self) -> Result<()> {
        let all = self
            .users
            .factors
            .iter()
            .chain(&self.items.factors)
            .flatten()
            .chain(&self.users.bias)
            .chain(&self.items.bias);
        for v in all {
            if !v.is_finite() {
                return Err(Error::NonFinite("ALS produced non-finite factors".into()));
            }
        }
        Ok(())
    }

    /// Versioned whitespace-separated text:
    ///
    /// ```text
    /// gatecheck-mf 1
    /// rank <k>
    /// lambda <f64>
    /// global_mean <f64>
    /// users <n>
    /// <id> <bias> <f_1> ... <f_k>      (n lines)
    /// items <m>
    /// <id> <bias> <f_1> ... <f_k>      (m lines)
    /// ```
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "gatecheck-mf 1")?;
        writeln!(w, "rank {}", self.rank)?;
        writeln!(w, "lambda {:?}", self.lambda)?;
        writeln!(w, "global_mean {:?}", self.global_mean.f64())?;
        for (name, table) in [("users", &self.users), ("items", &self.items)] {
            writeln!(w, "{name} {}", table.len())?;
            for k in 0..table.len() {
                write!(w, "{} {:?}", table.ids[k], table.bias[k].f64())?;
                for v in &table.factors[k] {
                    write!(w, " {:?}", v.f64())?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, Vec<String>)> {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| Error::ModelFormat(format!("unexpected end of file, expected {what}")))?;
            let line = line.map_err(|e| Error::ModelFormat(e.to_string()))?;
            Ok((idx + 1, line.split_whitespace().map(str::to_owned).collect()))
        };
        fn keyed<V: std::str::FromStr>(line: (usize, Vec<String>), key: &str) -> Result<V> {
            match line.1.as_slice() {
                [k, v] if k == key => v
                    .parse()
                    .map_err(|_| Error::ModelFormat(format!("line {}: bad value for {key}", line.0))),
                _ => Err(Error::ModelFormat(format!("line {}: expected `{key} <value>`", line.0))),
            }
        }
        let header = next("header")?;
        if header.1 != ["gatecheck-mf", "1"] {
            return Err(Error::ModelFormat(format!(
                "unsupported header `{}`",
                header.1.join(" ")
            )));
        }
        let rank: usize = keyed(next("rank")?, "rank")?;
        let lambda: f64 = keyed(next("lambda")?, "lambda")?;
        let global_mean: f64 = keyed(next("global_mean")?, "global_mean")?;
        let mut tables = Vec::new();
        for name in ["users", "items"] {
            let count: usize = keyed(next(name)?, name)?;
            let mut ids = Vec::with_capacity(count);
            let mut bias = Vec::with_capacity(count);
            let mut factors = Vec::with_capacity(count);
            for _ in 0..count {
                let (lineno, fields) = next("factor row")?;
                if fields.len() != rank + 2 {
                    return Err(Error::ModelFormat(format!(
                        "line {lineno}: expected {} fields, got {}",
                        rank + 2,
                        fields.len()
                    )));
                }
                let bad = |_| Error::ModelFormat(format!("line {lineno}: bad number"));
                ids.push(fields[0].parse::<u32>().map_err(|_| Error::ModelFormat(format!("line {lineno}: bad id")))?);
                bias.push(T::of(fields[1].parse::<f64>().map_err(bad)?));
                let row = fields[2..]
                    .iter()
                    .map(|s| s.parse::<f64>().map(T::of).map_err(bad))
                    .collect::<Result<Vec<T>>>()?;
                factors.push(row);
            }
            tables.push(EntityTable::new(ids, factors, bias));
        }
        let items = tables.pop().expect("two tables");
        let users = tables.pop().expect("two tables");
        let model = MfModel {
            rank,
            lambda,
            global_mean: T::of(global_mean),
            users,
            items,
        };
        model.check_finite()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

impl<T: Scalar> Predictor<T> for MfModel<T> {
    fn predict(&self, user: u32, item: u32) -> T {
        clip(self.raw_score(user, item))
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Ratings indexed by dense user/item positions.
#[derive(Debug, Clone)]
struct Interactions<T> {
    user_of: Vec<usize>,
    item_of: Vec<usize>,
    centred: Vec<T>,
    by_user: Vec<Vec<usize>>,
    by_item: Vec<Vec<usize>>,
}

/// Step-by-step ALS driver. Each half-step solves every entity's ridge
/// problem exactly, so [`AlsTrainer::objective`] never increases.
#[derive(Debug, Clone)]
pub struct AlsTrainer<T> {
    config: AlsConfig,
    data: Interactions<T>,
    model: MfModel<T>,
}

impl<T: Scalar> AlsTrainer<T> {
    pub fn new(train: &[RatingRecord], config: AlsConfig) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("ALS training set"));
        }
        if config.rank == 0 {
            return Err(Error::InvalidArgument("rank must be >= 1".into()));
        }
        if !(config.lambda > 0.0 && config.lambda.is_finite()) {
            return Err(Error::InvalidArgument("lambda must be > 0".into()));
        }
        let user_ids: Vec<u32> = train.iter().map(|r| r.user).collect::<BTreeSet<_>>().into_iter().collect();
        let item_ids: Vec<u32> = train.iter().map(|r| r.item).collect::<BTreeSet<_>>().into_iter().collect();
        let k = config.rank;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let scale = T::of(1.0 / (k as f64).sqrt());
        let mut init = |n: usize| -> Vec<Vec<T>> {
            (0..n)
                .map(|_| (0..k).map(|_| T::of(rng.random::<f64>()) * scale).collect())
                .collect()
        };
        let uf = init(user_ids.len());
        let vf = init(item_ids.len());
        let (n_users, n_items) = (user_ids.len(), item_ids.len());
        let users = EntityTable::new(user_ids, uf, vec![T::zero(); n_users]);
        let items = EntityTable::new(item_ids, vf, vec![T::zero(); n_items]);

        let mean = train.iter().map(|r| r.rating).sum::<f64>() / train.len() as f64;
        let global_mean = T::of(mean);
        let mut by_user = vec![Vec::new(); users.len()];
        let mut by_item = vec![Vec::new(); items.len()];
        let mut user_of = Vec::with_capacity(train.len());
        let mut item_of = Vec::with_capacity(train.len());
        let mut centred = Vec::with_capacity(train.len());
        for (idx, r) in train.iter().enumerate() {
            let u = users.position(r.user).expect("indexed");
            let i = items.position(r.item).expect("indexed");
            by_user[u].push(idx);
            by_item[i].push(idx);
            user_of.push(u);
            item_of.push(i);
            centred.push(T::of(r.rating) - global_mean);
        }
        Ok(Self {
            config,
            data: Interactions {
                user_of,
                item_of,
                centred,
                by_user,
                by_item,
            },
            model: MfModel {
                rank: k,
                lambda: config.lambda,
                global_mean,
                users,
                items,
            },
        })
    }

    pub fn model(&self) -> &MfModel<T> {
        &self.model
    }

    fn penalty_weight(&self, count: usize) -> T {
        let w = if self.config.count_weighted_lambda {
            self.config.lambda * count as f64
        } else {
            self.config.lambda
        };
        T::of(w)
    }

    /// Solves one entity's ridge problem against the fixed opposite side.
    /// Returns (factor, bias).
    fn solve_entity(
        &self,
        rows: &[usize],
        other: &EntityTable<T>,
        other_pos: &[usize],
        own_bias_enabled: bool,
    ) -> (Vec<T>, T) {
        let k = self.config.rank;
        let d = if own_bias_enabled { k + 1 } else { k };
        let mut a = SquareMatrix::zeros(d);
        let mut b = vec![T::zero(); d];
        let mut x = vec![T::zero(); d];
        for &idx in rows {
            let j = other_pos[idx];
            x[..k].copy_from_slice(&other.factors[j]);
            if own_bias_enabled {
                x[k] = T::one();
            }
            let target = self.data.centred[idx] - other.bias[j];
            a.add_outer(&x, T::one());
            for (bj, &xj) in b.iter_mut().zip(&x) {
                *bj += xj * target;
            }
        }
        a.add_diagonal(self.penalty_weight(rows.len()));
        let sol = a
            .cholesky_solve(&b)
            .unwrap_or_else(|| vec![T::nan(); d]);
        let bias = if own_bias_enabled { sol[k] } else { T::zero() };
        (sol[..k].to_vec(), bias)
    }

    pub fn update_users(&mut self) {
        let solved: Vec<(Vec<T>, T)> = (0..self.model.users.len())
            .into_par_iter()
            .map(|u| {
                self.solve_entity(
                    &self.data.by_user[u],
                    &self.model.items,
                    &self.data.item_of,
                    self.config.biases,
                )
            })
            .collect();
        for (u, (f, b)) in solved.into_iter().enumerate() {
            self.model.users.factors[u] = f;
            self.model.users.bias[u] = b;
        }
    }

    pub fn update_items(&mut self) {
        let solved: Vec<(Vec<T>, T)> = (0..self.model.items.len())
            .into_par_iter()
            .map(|i| {
                self.solve_entity(
                    &self.data.by_item[i],
                    &self.model.users,
                    &self.data.user_of,
                    self.config.biases,
                )
            })
            .collect();
        for (i, (f, b)) in solved.into_iter().enumerate() {
            self.model.items.factors[i] = f;
            self.model.items.bias[i] = b;
        }
    }

    /// Squared training error on centred ratings plus the ridge penalty on
    /// factors and offsets.
    pub fn objective(&self) -> T {
        let m = &self.model;
        let mut loss = T::zero();
        for idx in 0..self.data.centred.len() {
            let u = self.data.user_of[idx];
            let i = self.data.item_of[idx];
            let fit = m.users.bias[u] + m.items.bias[i] + dot(&m.users.factors[u], &m.items.factors[i]);
            let e = self.data.centred[idx] - fit;
            loss += e * e;
        }
        let mut pen = T::zero();
        for (table, rows) in [(&m.users, &self.data.by_user), (&m.items, &self.data.by_item)] {
            for k in 0..table.len() {
                let sq = dot(&table.factors[k], &table.factors[k]) + table.bias[k] * table.bias[k];
                pen += self.penalty_weight(rows[k].len()) * sq;
            }
        }
        loss + pen
    }

    pub fn into_model(self) -> Result<MfModel<T>> {
        self.model.check_finite()?;
        Ok(self.model)
    }
}

pub fn fit_als<T: Scalar>(train: &[RatingRecord], config: &AlsConfig) -> Result<MfModel<T>> {
    let mut trainer = AlsTrainer::new(train, *config)?;
    for _ in 0..config.iterations {
        trainer.update_users();
        trainer.update_items();
    }
    trainer.into_model()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    GlobalMean,
    UserMean,
    ItemMean,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::GlobalMean, BaselineKind::UserMean, BaselineKind::ItemMean];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::GlobalMean => "global_mean",
            BaselineKind::UserMean => "user_mean",
            BaselineKind::ItemMean => "item_mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel<T> {
    pub kind: BaselineKind,
    pub means: HashMap<u32, T>,
    pub global_mean: T,
}

impl<T: Scalar> BaselineModel<T> {
    pub fn fit(kind: BaselineKind, train: &[RatingRecord]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("baseline training set"));
        }
        let global = train.iter().map(|r| r.rating).sum::<f64>() / train.len() as f64;
        let mut acc: HashMap<u32, (f64, usize)> = HashMap::new();
        if kind != BaselineKind::GlobalMean {
            for r in train {
                let key = if kind == BaselineKind::UserMean { r.user } else { r.item };
                let e = acc.entry(key).or_default();
                e.0 += r.rating;
                e.1 += 1;
            }
        }
        Ok(Self {
            kind,
            means: acc
                .into_iter()
                .map(|(k, (s, n))| (k, T::of(s / n as f64)))
                .collect(),
            global_mean: T::of(global),
        })
    }
}

impl<T: Scalar> Predictor<T> for BaselineModel<T> {
    fn predict(&self, user: u32, item: u32) -> T {
        let key = match self.kind {
            BaselineKind::GlobalMean => return clip(self.global_mean),
            BaselineKind::UserMean => user,
            BaselineKind::ItemMean => item,
        };
        clip(self.means.get(&key).copied().unwrap_or(self.global_mean))
    }
}

pub fn rmse<T: Scalar>(predicted: &[T], actual: &[T]) -> Result<T> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::Empty("rmse input"));
    }
    let sse = predicted
        .iter()
        .zip(actual)
        .fold(T::zero(), |s, (&p, &a)| s + (p - a) * (p - a));
    Ok((sse / T::of_usize(predicted.len())).sqrt())
}
