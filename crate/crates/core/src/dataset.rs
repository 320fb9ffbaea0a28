//! Item sets with feature vectors, the metrics defined on them, CSV ingestion
//! and the synthetic generators used by the benchmarks.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ItemId;

/// A finite set of items, identified by `0..n`, each carrying a feature
/// vector of a common dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    dim: usize,
    features: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from row vectors. All rows must share one dimension
    /// and hold finite values.
    pub fn new(name: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::NoFeatures);
        }
        let mut features = Vec::with_capacity(n * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::ColumnCount {
                    row: i,
                    expected: dim,
                    found: row.len(),
                });
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "item {i} has non-finite feature {v}"
                )));
            }
            features.extend(row);
        }
        Ok(Dataset {
            name: name.into(),
            dim,
            features,
        })
    }

    /// Points on the real line, one item per coordinate.
    pub fn from_line(name: impl Into<String>, points: &[f64]) -> Result<Self> {
        Self::new(name, points.iter().map(|&p| vec![p]).collect())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn item(&self, id: ItemId) -> &[f64] {
        &self.features[id * self.dim..(id + 1) * self.dim]
    }

    pub fn items(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    /// Writes the dataset as CSV with an `id` column followed by `f0..f{dim-1}`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string()];
        header.extend((0..self.dim).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        for (id, row) in self.items().enumerate() {
            let mut rec = vec![id.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "manhattan" | "l1" => Ok(Metric::Manhattan),
            _ => Err(Error::Unknown {
                kind: "metric",
                name: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
        })
    }
}

enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

/// Loads a CSV table. The first row is a header; an optional `id` column
/// fixes item ids (a permutation of `0..n`), otherwise row order is used.
///
/// A column is categorical when none of its cells parse as numbers; such
/// columns are one-hot expanded with categories in sorted order. A column
/// mixing numbers and text is rejected at the first offending cell.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_csv(name, file)
}

pub fn read_csv(name: impl Into<String>, reader: impl std::io::Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let id_col = header.iter().position(|h| h.eq_ignore_ascii_case("id"));

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // rows are reported 1-based counting the header as row 1
        let row = i + 2;
        if rec.len() != header.len() {
            return Err(Error::ColumnCount {
                row,
                expected: header.len(),
                found: rec.len(),
            });
        }
        for (col, cell) in cells.iter_mut().zip(rec.iter()) {
            col.push(cell.to_string());
        }
    }
    let n = cells.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::EmptyDataset);
    }

    let order = match id_col {
        Some(c) => id_permutation(&cells[c])?,
        None => (0..n).collect(),
    };

    let mut columns = Vec::new();
    for (c, col) in cells.iter().enumerate() {
        if Some(c) == id_col {
            continue;
        }
        columns.push(classify_column(&header[c], col)?);
    }

    let mut rows = vec![Vec::new(); n];
    for column in &columns {
        match column {
            Column::Numeric(values) => {
                for (r, v) in values.iter().enumerate() {
                    rows[order[r]].push(*v);
                }
            }
            Column::Categorical(values) => {
                let cats: BTreeMap<&str, usize> = values
                    .iter()
                    .map(String::as_str)
                    .collect::<std::collections::BTreeSet<_>>()
                    .into_iter()
                    .enumerate()
                    .map(|(i, c)| (c, i))
                    .collect();
                for (r, v) in values.iter().enumerate() {
                    let hot = cats[v.as_str()];
                    rows[order[r]]
                        .extend((0..cats.len()).map(|k| if k == hot { 1.0 } else { 0.0 }));
                }
            }
        }
    }
    Dataset::new(name, rows)
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn classify_column(name: &str, col: &[String]) -> Result<Column> {
    let parsed: Vec<Option<f64>> = col.iter().map(|s| parse_finite(s)).collect();
    if parsed.iter().all(Option::is_some) {
        return Ok(Column::Numeric(parsed.into_iter().flatten().collect()));
    }
    let looks_text = |s: &str| s.parse::<f64>().is_err() && !s.is_empty();
    if col.iter().all(|s| looks_text(s)) {
        return Ok(Column::Categorical(col.to_vec()));
    }
    let r = parsed.iter().position(Option::is_none).unwrap_or(0);
    Err(Error::NonNumeric {
        row: r + 2,
        column: name.to_string(),
        value: col[r].clone(),
    })
}

fn id_permutation(col: &[String]) -> Result<Vec<usize>> {
    let n = col.len();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for (r, s) in col.iter().enumerate() {
        let row = r + 2;
        let id: usize = s.parse().map_err(|_| Error::InvalidId {
            row,
            value: s.clone(),
            reason: "not a nonnegative integer",
        })?;
        if id >= n {
            return Err(Error::InvalidId {
                row,
                value: s.clone(),
                reason: "ids must be contiguous from 0",
            });
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::InvalidId {
                row,
                value: s.clone(),
                reason: "duplicate id",
            });
        }
        order.push(id);
    }
    Ok(order)
}

/// Draws `n` points uniformly from the ℓ1 ball of the given radius in
/// `dim` dimensions. Deterministic for a fixed seed.
pub fn gen_l1_ball(n: usize, dim: usize, radius: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || dim == 0 {
        return Err(Error::InvalidParameter(
            "n and dim must be at least 1".into(),
        ));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut e = vec![0.0; dim + 1];
    for _ in 0..n {
        // normalized exponentials give a uniform point of the simplex
        // {x >= 0, sum x <= 1} once the slack coordinate is dropped
        for v in e.iter_mut() {
            *v = rng.sample::<f64, _>(Exp1);
        }
        let total: f64 = e.iter().sum();
        let row = e[..dim]
            .iter()
            .map(|v| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * radius * v / total
            })
            .collect();
        rows.push(row);
    }
    Dataset::new(format!("l1ball-n{n}-d{dim}-s{seed}"), rows)
}
