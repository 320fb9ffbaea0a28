//! Comparison oracles and the precomputed rank structure behind them.
//!
//! Search-time code never touches the metric. Everything it needs, whether
//! "is `x` strictly closer to `z` than `y` is", which items are equidistant
//! from `z`, or the prior mass of the first `k` distance classes around `z`,
//! is read from a [`RankTable`] built once from the metric.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Metric};
use crate::error::{Error, Result};
use crate::prior::Prior;
use crate::ItemId;

/// Absolute slack used whenever accumulated masses are compared.
pub const MASS_EPS: f64 = 1e-12;

/// Reply of a comparison oracle to the ordered pair `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Answer {
    /// The target is strictly closer to `x` than to `y`.
    Plus,
    /// The target is at least as close to `y` as to `x`.
    Minus,
}

impl Answer {
    pub fn sign(self) -> i8 {
        match self {
            Answer::Plus => 1,
            Answer::Minus => -1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Answer::Plus => Answer::Minus,
            Answer::Minus => Answer::Plus,
        }
    }

    pub fn from_sign(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Answer::Plus),
            -1 => Ok(Answer::Minus),
            v => Err(Error::MalformedAnswer(v)),
        }
    }
}

impl From<Answer> for i8 {
    fn from(a: Answer) -> i8 {
        a.sign()
    }
}

impl TryFrom<i8> for Answer {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        Answer::from_sign(v as i64)
    }
}

/// For every item `z`, the items of the dataset grouped into classes of
/// equal distance from `z`, in strictly increasing distance order.
///
/// Class indices are 1-based; class 1 of `z` always contains `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    n: usize,
    mass: Vec<f64>,
    /// `order[z*n..(z+1)*n]` lists items by increasing distance from `z`.
    order: Vec<u32>,
    /// Per `z`, start offsets of each class in its order slice, plus `n`.
    class_start: Vec<Vec<u32>>,
    /// `rank[z*n + x]` is the class index of `x` around `z`.
    rank: Vec<u32>,
    /// Per `z`, `cum_mass[z][k-1]` is the prior mass of classes `1..=k`.
    cum_mass: Vec<Vec<f64>>,
}

impl RankTable {
    /// Sorts every item's neighbours by distance. This is the only place
    /// the metric is consulted.
    pub fn build(dataset: &Dataset, metric: Metric, prior: &Prior) -> Result<Self> {
        let n = dataset.len();
        if prior.len() != n {
            return Err(Error::Mismatch(format!(
                "prior has {} masses for {n} items",
                prior.len()
            )));
        }
        let classes: Vec<Vec<Vec<u32>>> = (0..n)
            .into_par_iter()
            .map(|z| {
                let pz = dataset.item(z);
                let mut d: Vec<(f64, u32)> = (0..n)
                    .map(|x| (metric.distance(pz, dataset.item(x)), x as u32))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut out: Vec<Vec<u32>> = Vec::new();
                let mut last = f64::NAN;
                for (dist, x) in d {
                    if dist == last {
                        out.last_mut().expect("class started").push(x);
                    } else {
                        out.push(vec![x]);
                        last = dist;
                    }
                }
                out
            })
            .collect();
        Self::from_classes(classes, prior)
    }

    /// Reassembles a table from per-item class lists, validating that each
    /// item's classes partition `0..n` with the item itself in class 1.
    pub fn from_classes(classes: Vec<Vec<Vec<u32>>>, prior: &Prior) -> Result<Self> {
        let n = classes.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if prior.len() != n {
            return Err(Error::Mismatch(format!(
                "prior has {} masses for {n} items",
                prior.len()
            )));
        }
        let mut order = Vec::with_capacity(n * n);
        let mut rank = vec![0u32; n * n];
        let mut class_start = Vec::with_capacity(n);
        let mut cum_mass = Vec::with_capacity(n);
        for (z, cls) in classes.into_iter().enumerate() {
            let mut starts = Vec::with_capacity(cls.len() + 1);
            let mut cum = Vec::with_capacity(cls.len());
            let mut acc = 0.0;
            let mut count = 0usize;
            for (k, class) in cls.iter().enumerate() {
                if class.is_empty() {
                    return Err(Error::Mismatch(format!(
                        "empty class {} around item {z}",
                        k + 1
                    )));
                }
                starts.push(count as u32);
                let mut class_mass = 0.0;
                for &x in class {
                    let xi = x as usize;
                    if xi >= n || rank[z * n + xi] != 0 {
                        return Err(Error::Mismatch(format!(
                            "classes around item {z} do not partition the items"
                        )));
                    }
                    rank[z * n + xi] = k as u32 + 1;
                    order.push(x);
                    class_mass += prior.mass(xi);
                    count += 1;
                }
                acc += class_mass;
                cum.push(acc);
            }
            if count != n || rank[z * n + z] != 1 {
                return Err(Error::Mismatch(format!(
                    "classes around item {z} must cover all items with {z} in class 1"
                )));
            }
            starts.push(n as u32);
            class_start.push(starts);
            cum_mass.push(cum);
        }
        Ok(RankTable {
            n,
            mass: prior.masses().to_vec(),
            order,
            class_start,
            rank,
            cum_mass,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mass(&self, x: ItemId) -> f64 {
        self.mass[x]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// Class index (1-based) of `x` in the distance order around `z`.
    #[inline]
    pub fn rank_of(&self, z: ItemId, x: ItemId) -> u32 {
        self.rank[z * self.n + x]
    }

    /// All class indices around `z`, indexed by item.
    #[inline]
    pub fn rank_row(&self, z: ItemId) -> &[u32] {
        &self.rank[z * self.n..(z + 1) * self.n]
    }

    pub fn class_count(&self, z: ItemId) -> usize {
        self.cum_mass[z].len()
    }

    /// Members of class `k` (1-based) around `z`.
    pub fn class(&self, z: ItemId, k: u32) -> &[u32] {
        let starts = &self.class_start[z];
        let base = z * self.n;
        let (a, b) = (starts[k as usize - 1] as usize, starts[k as usize] as usize);
        &self.order[base + a..base + b]
    }

    pub fn classes(&self, z: ItemId) -> impl Iterator<Item = &[u32]> {
        (1..=self.class_count(z) as u32).map(move |k| self.class(z, k))
    }

    /// Prior mass of classes `1..=k` around `z`, i.e. of the closed ball
    /// around `z` reaching out to class `k`.
    #[inline]
    pub fn ball_mass(&self, z: ItemId, k: u32) -> f64 {
        self.cum_mass[z][k as usize - 1]
    }

    pub fn cum_masses(&self, z: ItemId) -> &[f64] {
        &self.cum_mass[z]
    }

    /// Exact comparison oracle `O_z(x, y)`. Ties answer [`Answer::Minus`].
    #[inline]
    pub fn answer(&self, z: ItemId, x: ItemId, y: ItemId) -> Answer {
        if self.rank_of(z, x) < self.rank_of(z, y) {
            Answer::Plus
        } else {
            Answer::Minus
        }
    }

    /// Whether `x` and `y` are equidistant from `z`, i.e. both orderings of
    /// the pair answer [`Answer::Minus`].
    pub fn is_tie(&self, z: ItemId, x: ItemId, y: ItemId) -> bool {
        self.answer(z, x, y) == Answer::Minus && self.answer(z, y, x) == Answer::Minus
    }

    /// Whether no comparison can tell `x` from `y` (zero distance apart).
    pub fn indistinguishable(&self, x: ItemId, y: ItemId) -> bool {
        self.rank_of(x, y) == 1
    }

    pub fn to_file(&self) -> RankTableFile {
        RankTableFile {
            format: RANK_TABLE_FORMAT.into(),
            version: RANK_TABLE_VERSION,
            n: self.n,
            classes: (0..self.n)
                .map(|z| self.classes(z).map(<[u32]>::to_vec).collect())
                .collect(),
        }
    }

    pub fn from_file(file: RankTableFile, prior: &Prior) -> Result<Self> {
        if file.format != RANK_TABLE_FORMAT || file.version != RANK_TABLE_VERSION {
            return Err(Error::Mismatch(format!(
                "unsupported rank table {} v{}",
                file.format, file.version
            )));
        }
        if file.classes.len() != file.n {
            return Err(Error::Mismatch("class list length differs from n".into()));
        }
        Self::from_classes(file.classes, prior)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), &self.to_file())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, prior: &Prior) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let file: RankTableFile = serde_json::from_reader(std::io::BufReader::new(f))?;
        Self::from_file(file, prior)
    }
}

pub const RANK_TABLE_FORMAT: &str = "ranknet-rank-table";
pub const RANK_TABLE_VERSION: u32 = 1;

/// Serialized rank table. Holds class memberships only, no distances and
/// no masses; the prior is supplied again on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTableFile {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub classes: Vec<Vec<Vec<u32>>>,
}

/// Anything that answers comparison queries about a hidden target.
pub trait Oracle {
    fn ask(&mut self, x: ItemId, y: ItemId) -> Answer;
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn ask(&mut self, x: ItemId, y: ItemId) -> Answer {
        (**self).ask(x, y)
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn ask(&mut self, x: ItemId, y: ItemId) -> Answer {
        (**self).ask(x, y)
    }
}

/// Truthful oracle for a known target.
#[derive(Debug, Clone, Copy)]
pub struct ExactOracle<'a> {
    table: &'a RankTable,
    target: ItemId,
}

impl<'a> ExactOracle<'a> {
    pub fn new(table: &'a RankTable, target: ItemId) -> Self {
        ExactOracle { table, target }
    }
}

impl Oracle for ExactOracle<'_> {
    fn ask(&mut self, x: ItemId, y: ItemId) -> Answer {
        self.table.answer(self.target, x, y)
    }
}

/// Flips `inner` with probability `epsilon`.
pub fn noisy_answer<R: Rng + ?Sized>(inner: Answer, epsilon: f64, rng: &mut R) -> Answer {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        inner.flip()
    } else {
        inner
    }
}

/// Wraps an oracle so that every answer is independently wrong with
/// probability `epsilon`.
#[derive(Debug, Clone)]
pub struct NoisyOracle<O> {
    inner: O,
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl<O: Oracle> NoisyOracle<O> {
    pub fn new(inner: O, epsilon: f64, seed: u64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(NoisyOracle {
            inner,
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl<O: Oracle> Oracle for NoisyOracle<O> {
    fn ask(&mut self, x: ItemId, y: ItemId) -> Answer {
        let a = self.inner.ask(x, y);
        noisy_answer(a, self.epsilon, &mut self.rng)
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if (0.0..0.5).contains(&epsilon) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "epsilon must lie in [0, 0.5), got {epsilon}"
        )))
    }
}

/// Tie detection against a live oracle: costs two queries.
pub fn is_tie_live<O: Oracle + ?Sized>(oracle: &mut O, x: ItemId, y: ItemId) -> bool {
    oracle.ask(x, y) == Answer::Minus && oracle.ask(y, x) == Answer::Minus
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OracleKind {
    Exact,
    Noisy {
        epsilon: f64,
        seed: u64,
    },
    /// Answers come from outside (a person driving a session).
    ExternalSession,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub kind: OracleKind,
    #[serde(default = "yes")]
    pub counting: bool,
}

fn yes() -> bool {
    true
}

impl OracleConfig {
    pub fn exact() -> Self {
        OracleConfig {
            kind: OracleKind::Exact,
            counting: true,
        }
    }

    pub fn noisy(epsilon: f64, seed: u64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(OracleConfig {
            kind: OracleKind::Noisy { epsilon, seed },
            counting: true,
        })
    }

    /// Simulated oracle for `target`. External sessions have no simulated
    /// counterpart and yield `None`.
    pub fn simulate<'a>(
        &self,
        table: &'a RankTable,
        target: ItemId,
    ) -> Result<Option<Box<dyn Oracle + Send + 'a>>> {
        Ok(match self.kind {
            OracleKind::Exact => Some(Box::new(ExactOracle::new(table, target))),
            OracleKind::Noisy { epsilon, seed } => Some(Box::new(NoisyOracle::new(
                ExactOracle::new(table, target),
                epsilon,
                seed,
            )?)),
            OracleKind::ExternalSession => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub x: ItemId,
    pub y: ItemId,
    pub answer: Answer,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLog {
    entries: Vec<QueryRecord>,
}

impl QueryLog {
    pub fn push(&mut self, x: ItemId, y: ItemId, answer: Answer) {
        self.entries.push(QueryRecord { x, y, answer });
    }

    pub fn query_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[QueryRecord] {
        &self.entries
    }

    pub fn pairs(&self) -> impl Iterator<Item = (ItemId, ItemId)> + '_ {
        self.entries.iter().map(|e| (e.x, e.y))
    }
}

/// Oracle adapter that records every query it forwards.
pub struct LoggingOracle<O> {
    pub inner: O,
    pub log: QueryLog,
}

impl<O: Oracle> LoggingOracle<O> {
    pub fn new(inner: O) -> Self {
        LoggingOracle {
            inner,
            log: QueryLog::default(),
        }
    }
}

impl<O: Oracle> Oracle for LoggingOracle<O> {
    fn ask(&mut self, x: ItemId, y: ItemId) -> Answer {
        let a = self.inner.ask(x, y);
        self.log.push(x, y, a);
        a
    }
}
