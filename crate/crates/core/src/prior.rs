//! Target priors and the information statistics derived from them.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Metric};
use crate::error::{Error, Result};
use crate::ItemId;

/// Tolerance on the total mass of a prior.
pub const MASS_SUM_TOLERANCE: f64 = 1e-9;

/// A probability mass function over item ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    mass: Vec<f64>,
}

/// How power-law ranks are assigned to items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankAssignment {
    /// A seed-determined permutation of the items.
    #[default]
    Shuffled,
    /// Item `i` gets rank `i + 1`.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PriorSpec {
    Uniform,
    #[serde(rename = "powerlaw")]
    PowerLaw {
        alpha: f64,
        #[serde(default)]
        assignment: RankAssignment,
    },
    Explicit {
        masses: Vec<f64>,
    },
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::PowerLaw {
            alpha: 0.4,
            assignment: RankAssignment::Shuffled,
        }
    }
}

impl FromStr for PriorSpec {
    type Err = Error;

    /// Accepts `uniform`, `powerlaw:<alpha>[:identity]` and
    /// `explicit:<m0>,<m1>,...`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Unknown {
            kind: "prior",
            name: s.to_string(),
        };
        let mut parts = s.split(':');
        match parts.next().map(str::to_ascii_lowercase).as_deref() {
            Some("uniform") => Ok(PriorSpec::Uniform),
            Some("powerlaw") => {
                let alpha = parts
                    .next()
                    .map_or(Ok(0.4), str::parse)
                    .map_err(|_| bad())?;
                let assignment = match parts.next() {
                    None | Some("shuffled") => RankAssignment::Shuffled,
                    Some("identity") => RankAssignment::Identity,
                    Some(_) => return Err(bad()),
                };
                Ok(PriorSpec::PowerLaw { alpha, assignment })
            }
            Some("explicit") => {
                let masses = parts
                    .next()
                    .ok_or_else(bad)?
                    .split(',')
                    .map(|m| m.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                Ok(PriorSpec::Explicit { masses })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorSpec::Uniform => f.write_str("uniform"),
            PriorSpec::PowerLaw { alpha, assignment } => {
                write!(f, "powerlaw:{alpha}")?;
                if *assignment == RankAssignment::Identity {
                    f.write_str(":identity")?;
                }
                Ok(())
            }
            PriorSpec::Explicit { masses } => {
                let m: Vec<String> = masses.iter().map(f64::to_string).collect();
                write!(f, "explicit:{}", m.join(","))
            }
        }
    }
}

impl Prior {
    /// Normalizes nonnegative weights into a prior.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some((item, &mass)) = weights
            .iter()
            .enumerate()
            .find(|(_, m)| !(**m >= 0.0 && m.is_finite()))
        {
            return Err(Error::NegativeMass { item, mass });
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptySupport);
        }
        Ok(Prior {
            mass: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_weights(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mass(&self, id: ItemId) -> f64 {
        self.mass[id]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn support(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, _)| i)
    }

    /// Mass of a set of items, summed in the order given.
    pub fn mass_of(&self, items: &[ItemId]) -> f64 {
        items.iter().map(|&i| self.mass[i]).sum()
    }

    /// Entropy in bits over the support.
    pub fn entropy(&self) -> f64 {
        self.mass
            .iter()
            .filter(|m| **m > 0.0)
            .map(|m| -m * m.log2())
            .sum()
    }

    /// Largest surprisal `log2(1/μ(x))` over the support.
    pub fn hmax(&self) -> f64 {
        self.mass
            .iter()
            .filter(|m| **m > 0.0)
            .map(|m| -m.log2())
            .fold(0.0, f64::max)
    }
}

pub fn make_prior(n: usize, spec: &PriorSpec, seed: u64) -> Result<Prior> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    match spec {
        PriorSpec::Uniform => Prior::uniform(n),
        PriorSpec::PowerLaw { alpha, assignment } => {
            if !(*alpha >= 0.0 && alpha.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "alpha must be >= 0, got {alpha}"
                )));
            }
            let by_rank = Prior::from_weights((1..=n).map(|r| (r as f64).powf(-alpha)).collect())?;
            let mut ranks: Vec<usize> = (0..n).collect();
            if *assignment == RankAssignment::Shuffled {
                ranks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            }
            Ok(Prior {
                mass: ranks.into_iter().map(|r| by_rank.mass[r]).collect(),
            })
        }
        PriorSpec::Explicit { masses } => {
            if masses.len() != n {
                return Err(Error::Mismatch(format!(
                    "explicit prior has {} masses for {n} items",
                    masses.len()
                )));
            }
            Prior::from_weights(masses.clone())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n: usize,
    pub dim: usize,
    pub entropy_bits: f64,
    pub hmax_bits: f64,
    pub doubling_constant: f64,
}

impl DatasetStats {
    pub fn compute(dataset: &Dataset, metric: Metric, prior: &Prior) -> Self {
        DatasetStats {
            n: dataset.len(),
            dim: dataset.dim(),
            entropy_bits: prior.entropy(),
            hmax_bits: prior.hmax(),
            doubling_constant: doubling_constant(dataset, metric, prior),
        }
    }

    /// Doubling dimension `log2 c`, for display.
    pub fn doubling_dimension(&self) -> f64 {
        self.doubling_constant.log2()
    }
}

/// Exact doubling constant: the supremum of `μ(B_x(2R)) / μ(B_x(R))` over
/// `x` in the support and `R >= 0`.
///
/// Both ball masses are right-continuous step functions of `R`, so the
/// ratio is constant on intervals between consecutive breakpoints
/// `{d, d/2}` where `d` ranges over distances from `x`. Evaluating at every
/// breakpoint attains the supremum.
pub fn doubling_constant(dataset: &Dataset, metric: Metric, prior: &Prior) -> f64 {
    use rayon::prelude::*;

    let n = dataset.len();
    let support: Vec<ItemId> = prior.support().collect();
    support
        .par_iter()
        .map(|&x| {
            let px = dataset.item(x);
            let mut by_dist: Vec<(f64, f64)> = (0..n)
                .map(|y| (metric.distance(px, dataset.item(y)), prior.mass(y)))
                .collect();
            by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
            let dists: Vec<f64> = by_dist.iter().map(|p| p.0).collect();
            let mut prefix = Vec::with_capacity(n);
            let mut acc = 0.0;
            for (_, m) in &by_dist {
                acc += m;
                prefix.push(acc);
            }
            let ball = |r: f64| {
                let k = dists.partition_point(|d| *d <= r);
                prefix[k - 1]
            };
            let mut best: f64 = 1.0;
            for &d in &dists {
                for r in [d, d / 2.0] {
                    best = best.max(ball(2.0 * r) / ball(r));
                }
            }
            best
        })
        .reduce(|| 1.0, f64::max)
}
