//! Generalized binary search and its restricted variants.
//!
//! Every item is a hypothesis; the version space holds the items whose
//! oracle answers agree with everything observed so far. GBS asks the pair
//! whose answers split the version space's mass most evenly. F-GBS only
//! considers pairs inside the version space. S-GBS only considers pairs
//! that share a net in the rank-net tree.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::counters::CostCounters;
use crate::error::{Error, Result};
use crate::oracle::{Answer, RankTable};
use crate::ItemId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GbsVariant {
    /// All ordered pairs of items.
    Full,
    /// Pairs within the current version space.
    Fast,
    /// Pairs of members of a common net.
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairProvenance {
    All,
    WithinVersionSpace,
    SameNet,
}

/// Candidate queries for [`select_query`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairSet {
    /// Every ordered pair `(x, y)` of items, `x == y` included.
    All,
    /// Ordered pairs of distinct version-space members.
    WithinVersionSpace,
    /// A fixed list, sorted lexicographically.
    Explicit {
        provenance: PairProvenance,
        pairs: Vec<(ItemId, ItemId)>,
    },
}

impl PairSet {
    pub fn explicit(provenance: PairProvenance, mut pairs: Vec<(ItemId, ItemId)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        PairSet::Explicit { provenance, pairs }
    }

    pub fn provenance(&self) -> PairProvenance {
        match self {
            PairSet::All => PairProvenance::All,
            PairSet::WithinVersionSpace => PairProvenance::WithinVersionSpace,
            PairSet::Explicit { provenance, .. } => *provenance,
        }
    }
}

/// `|Σ_{z∈V} μ(z)·O_z(x, y)|`, summed in version-space order.
pub fn gbs_objective(table: &RankTable, space: &[ItemId], x: ItemId, y: ItemId) -> f64 {
    let mut s = 0.0;
    for &z in space {
        let m = table.mass(z);
        s += if table.rank_of(z, x) < table.rank_of(z, y) {
            m
        } else {
            -m
        };
    }
    s.abs()
}

/// `μ(V)`, summed in the same order as [`gbs_objective`] so that a pair
/// that does not split `V` scores exactly `μ(V)`.
pub fn space_mass(table: &RankTable, space: &[ItemId]) -> f64 {
    let mut s = 0.0;
    for &z in space {
        s += table.mass(z);
    }
    s
}

/// The version space is resolved once all of its positive-mass members are
/// indistinguishable from one another (normally: exactly one remains).
pub fn resolved_item(table: &RankTable, space: &[ItemId]) -> Option<ItemId> {
    let mut positive = space.iter().copied().filter(|&z| table.mass(z) > 0.0);
    let first = positive.next()?;
    positive
        .all(|z| table.indistinguishable(first, z))
        .then_some(first)
}

/// `{z ∈ V : O_z(x, y) = answer}`. An answer that leaves no positive-mass
/// hypothesis is inconsistent.
pub fn update_version_space(
    table: &RankTable,
    space: &[ItemId],
    (x, y): (ItemId, ItemId),
    answer: Answer,
) -> Result<Vec<ItemId>> {
    let next: Vec<ItemId> = space
        .iter()
        .copied()
        .filter(|&z| table.answer(z, x, y) == answer)
        .collect();
    if next.iter().all(|&z| table.mass(z) == 0.0) {
        return Err(Error::InconsistentAnswers);
    }
    Ok(next)
}

/// Lexicographically first pair minimizing the objective over `pairs`.
///
/// When no pair in the set splits the version space's mass, the pairs
/// within the version space are tried instead. Returns `None` when nothing
/// splits it at all (the version space is resolved).
pub fn select_query(
    table: &RankTable,
    space: &[ItemId],
    pairs: &PairSet,
    counters: &mut CostCounters,
) -> Option<(ItemId, ItemId)> {
    let total = space_mass(table, space);
    counters.mass_additions += space.len() as u64;
    let best = match pairs {
        PairSet::All => {
            let n = table.len();
            best_of(
                table,
                space,
                (0..n).flat_map(|x| (0..n).map(move |y| (x, y))),
                counters,
            )
        }
        PairSet::WithinVersionSpace => best_within(table, space, counters),
        PairSet::Explicit { pairs, .. } => best_of(table, space, pairs.iter().copied(), counters),
    };
    match best {
        Some((pair, f)) if f < total => Some(pair),
        _ if *pairs != PairSet::WithinVersionSpace => best_within(table, space, counters)
            .filter(|&(_, f)| f < total)
            .map(|(p, _)| p),
        _ => None,
    }
}

fn best_of(
    table: &RankTable,
    space: &[ItemId],
    pairs: impl Iterator<Item = (ItemId, ItemId)>,
    counters: &mut CostCounters,
) -> Option<((ItemId, ItemId), f64)> {
    let mut best: Option<((ItemId, ItemId), f64)> = None;
    let mut evaluated = 0u64;
    for (x, y) in pairs {
        evaluated += 1;
        let f = gbs_objective(table, space, x, y);
        if best.is_none_or(|(_, b)| f < b) {
            best = Some(((x, y), f));
        }
    }
    charge_pairs(counters, evaluated, space.len());
    best
}

fn charge_pairs(counters: &mut CostCounters, pairs: u64, space_len: usize) {
    counters.pair_evaluations += pairs;
    counters.table_lookups += pairs * space_len as u64;
    counters.mass_additions += pairs * space_len as u64;
}

/// Scores all ordered pairs of distinct members at once. Accumulating per
/// hypothesis `z` in version-space order gives bit-identical sums to
/// [`gbs_objective`].
fn best_within(
    table: &RankTable,
    space: &[ItemId],
    counters: &mut CostCounters,
) -> Option<((ItemId, ItemId), f64)> {
    let m = space.len();
    if m < 2 {
        return None;
    }
    let mut acc = vec![0.0f64; m * m];
    let mut ranks = vec![0u32; m];
    for &z in space {
        let row = table.rank_row(z);
        for (r, &y) in ranks.iter_mut().zip(space) {
            *r = row[y];
        }
        let mz = table.mass(z);
        for (i, acc_row) in acc.chunks_exact_mut(m).enumerate() {
            let rx = ranks[i];
            for (a, &ry) in acc_row.iter_mut().zip(&ranks) {
                *a += if rx < ry { mz } else { -mz };
            }
        }
    }
    charge_pairs(counters, (m * (m - 1)) as u64, m);

    // space is ascending, so row-major order over (i, j) is lexicographic
    let mut best: Option<((ItemId, ItemId), f64)> = None;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let f = acc[i * m + j].abs();
            if best.is_none_or(|(_, b)| f < b) {
                best = Some(((space[i], space[j]), f));
            }
        }
    }
    best
}

/// Outcome of one simulated search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetOutcome {
    pub target: ItemId,
    pub result: ItemId,
    pub queries: u64,
    pub counters: CostCounters,
}

/// Runs a noiseless GBS-family policy against every positive-mass target at
/// once by expanding its decision tree: each version space is scored once
/// and split by the answers of its members. Per-target results equal those
/// of independent searches.
pub fn policy_outcomes(table: &RankTable, pairs: &PairSet) -> Result<Vec<TargetOutcome>> {
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<ItemId>, u64, CostCounters)> =
        vec![((0..table.len()).collect(), 0, CostCounters::default())];
    while let Some((space, depth, spent)) = stack.pop() {
        if let Some(result) = resolved_item(table, &space) {
            for &t in space.iter().filter(|&&z| table.mass(z) > 0.0) {
                out.push(TargetOutcome {
                    target: t,
                    result,
                    queries: depth,
                    counters: spent,
                });
            }
            continue;
        }
        let mut c = spent;
        let (x, y) =
            select_query(table, &space, pairs, &mut c).ok_or(Error::InconsistentAnswers)?;
        c.oracle_queries += 1;
        let (plus, minus): (Vec<ItemId>, Vec<ItemId>) = space
            .iter()
            .partition(|&&z| table.answer(z, x, y) == Answer::Plus);
        for part in [minus, plus] {
            if part.iter().any(|&z| table.mass(z) > 0.0) {
                stack.push((part, depth + 1, c));
            }
        }
    }
    out.sort_by_key(|o| o.target);
    Ok(out)
}

/// Largest dataset full GBS will run on; it scores all n² pairs per query.
pub const FULL_GBS_MAX_N: usize = 250;

pub const EXACT_OPT_MAX_N: usize = 7;

/// Minimum expected number of queries over all adaptive policies, by
/// memoized recursion over reachable version spaces:
/// `OPT(V) = 0` if `V` is resolved, else
/// `min over splitting pairs of 1 + Σ_a μ(V_a)/μ(V)·OPT(V_a)`.
pub fn exact_opt(table: &RankTable, max_n: usize) -> Result<f64> {
    let n = table.len();
    if n > max_n || n > 20 {
        return Err(Error::TooLarge {
            n,
            max: max_n.min(20),
        });
    }
    // answer masks: bit z set when O_z(x, y) = +1
    let masks: Vec<u32> = (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .map(|(x, y)| {
            (0..n)
                .filter(|&z| table.answer(z, x, y) == Answer::Plus)
                .fold(0u32, |m, z| m | (1 << z))
        })
        .collect();
    let mut memo = HashMap::new();
    Ok(opt_rec(table, &masks, (1u32 << n) - 1, &mut memo))
}

fn mask_items(mask: u32) -> Vec<ItemId> {
    (0..32).filter(|z| mask & (1 << z) != 0).collect()
}

fn mask_mass(table: &RankTable, mask: u32) -> f64 {
    mask_items(mask).into_iter().map(|z| table.mass(z)).sum()
}

fn opt_rec(table: &RankTable, masks: &[u32], space: u32, memo: &mut HashMap<u32, f64>) -> f64 {
    if let Some(&v) = memo.get(&space) {
        return v;
    }
    let value = if resolved_item(table, &mask_items(space)).is_some() {
        0.0
    } else {
        let total = mask_mass(table, space);
        let mut best = f64::INFINITY;
        let mut seen = std::collections::HashSet::new();
        for &m in masks {
            let plus = space & m;
            let minus = space & !m;
            let (pm, mm) = (mask_mass(table, plus), mask_mass(table, minus));
            if pm <= 0.0 || mm <= 0.0 || !seen.insert(plus) {
                continue;
            }
            let v = 1.0
                + pm / total * opt_rec(table, masks, plus, memo)
                + mm / total * opt_rec(table, masks, minus, memo);
            best = best.min(v);
        }
        best
    };
    memo.insert(space, value);
    value
}

/// μ-weighted mean of per-target query counts.
pub fn expected_queries(table: &RankTable, outcomes: &[TargetOutcome]) -> f64 {
    outcomes
        .iter()
        .map(|o| table.mass(o.target) * o.queries as f64)
        .sum()
}
