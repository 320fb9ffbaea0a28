//! Rank nets over a domain of items.
//!
//! A ρ-rank net of a domain `E` is a maximal set of members whose pairwise
//! distances exceed the smaller of their two mass radii `d_y(ρ, E)`, where
//! `d_y` is the radius of the smallest ball around `y` holding a `ρ`
//! fraction of `μ(E)`. Each member owns the smallest ball around it that
//! contains its Voronoi cell; search continues inside the ball of the
//! member nearest to the target.
//!
//! Radii are class indices into the [`RankTable`], never raw distances, and
//! ball masses are global (over all items), as read from the table's
//! cumulative masses.

use serde::{Deserialize, Serialize};

use crate::counters::CostCounters;
use crate::error::{Error, Result};
use crate::oracle::{RankTable, MASS_EPS};
use crate::ItemId;

/// `d_y(ρ, E)` expressed as a class index around `owner`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusRank {
    pub owner: ItemId,
    pub class_index: u32,
    pub threshold_mass: f64,
}

/// Smallest class prefix around `y` whose global mass reaches `ρ·μ(E)`.
pub fn radius_rank(table: &RankTable, domain: &[ItemId], y: ItemId, rho: f64) -> RadiusRank {
    let mass: f64 = domain.iter().map(|&z| table.mass(z)).sum();
    radius_rank_for(table, y, rho * mass, &mut CostCounters::default())
}

pub(crate) fn radius_rank_for(
    table: &RankTable,
    y: ItemId,
    threshold: f64,
    counters: &mut CostCounters,
) -> RadiusRank {
    let cum = table.cum_masses(y);
    let (mut lo, mut hi) = (0usize, cum.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        counters.table_lookups += 1;
        if cum[mid] >= threshold - MASS_EPS {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    RadiusRank {
        owner: y,
        // accumulated masses can fall an ulp short of μ(E) when ρ = 1
        class_index: (lo.min(cum.len() - 1) + 1) as u32,
        threshold_mass: threshold,
    }
}

/// The net condition `d(y, y') > min{d_y, d_y'}`: holds unless each of the
/// two lies inside the other's radius ball.
pub fn net_condition(table: &RankTable, a: &RadiusRank, b: &RadiusRank) -> bool {
    debug_assert_ne!(a.owner, b.owner, "net condition needs distinct items");
    table.rank_of(a.owner, b.owner) > a.class_index
        || table.rank_of(b.owner, a.owner) > b.class_index
}

fn net_condition_counted(
    table: &RankTable,
    a: &RadiusRank,
    b: &RadiusRank,
    c: &mut CostCounters,
) -> bool {
    c.table_lookups += 1;
    if table.rank_of(a.owner, b.owner) > a.class_index {
        return true;
    }
    c.table_lookups += 1;
    table.rank_of(b.owner, a.owner) > b.class_index
}

/// Greedy maximal net: scans `order` and admits every item that satisfies
/// the net condition against all members admitted so far.
pub fn greedy_net(table: &RankTable, domain: &[ItemId], rho: f64, order: &[ItemId]) -> Vec<ItemId> {
    let mass: f64 = domain.iter().map(|&z| table.mass(z)).sum();
    let radii: Vec<RadiusRank> = order
        .iter()
        .map(|&y| radius_rank_for(table, y, rho * mass, &mut CostCounters::default()))
        .collect();
    greedy_from_radii(table, &radii, &mut CostCounters::default())
        .into_iter()
        .map(|i| order[i])
        .collect()
}

/// Indices into `radii` of the admitted members.
fn greedy_from_radii(table: &RankTable, radii: &[RadiusRank], c: &mut CostCounters) -> Vec<usize> {
    let mut members: Vec<usize> = Vec::new();
    for (i, cand) in radii.iter().enumerate() {
        if members
            .iter()
            .all(|&m| net_condition_counted(table, &radii[m], cand, c))
        {
            members.push(i);
        }
    }
    members
}

/// A member's circumscribing ball, restricted to the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: ItemId,
    /// Class index (around `center`) of the farthest Voronoi-assigned item.
    pub radius_class: u32,
    /// Domain items within `radius_class` of `center`, in domain order.
    pub members: Vec<ItemId>,
    /// Global prior mass of the ball.
    pub mass: f64,
}

impl Ball {
    /// A ball of zero radius contains only its center and items no query
    /// can tell apart from it.
    pub fn is_leaf(&self) -> bool {
        self.radius_class == 1
    }
}

/// Voronoi assignment followed by circumscription.
///
/// Every non-member `z` goes to each member in its nearest occupied class;
/// a member's radius is the largest class index among what it received
/// (at least 1 for itself). The ball then holds every domain item within
/// that radius, so balls can overlap and exceed the bare Voronoi cell.
pub fn voronoi_balls(table: &RankTable, domain: &[ItemId], members: &[ItemId]) -> Vec<Ball> {
    voronoi_counted(table, domain, members, &mut CostCounters::default())
}

fn voronoi_counted(
    table: &RankTable,
    domain: &[ItemId],
    members: &[ItemId],
    c: &mut CostCounters,
) -> Vec<Ball> {
    let mut radius = vec![1u32; members.len()];
    let mut is_member = vec![false; table.len()];
    for &y in members {
        is_member[y] = true;
    }
    let mut ranks = vec![0u32; members.len()];
    for &z in domain {
        if is_member[z] {
            continue;
        }
        c.table_lookups += members.len() as u64;
        for (r, &y) in ranks.iter_mut().zip(members) {
            *r = table.rank_of(z, y);
        }
        let jmin = *ranks.iter().min().expect("nonempty net");
        for (i, &r) in ranks.iter().enumerate() {
            if r == jmin {
                c.table_lookups += 1;
                radius[i] = radius[i].max(table.rank_of(members[i], z));
            }
        }
    }
    members
        .iter()
        .zip(radius)
        .map(|(&y, r)| {
            c.table_lookups += domain.len() as u64 + 1;
            let row = table.rank_row(y);
            Ball {
                center: y,
                radius_class: r,
                members: domain.iter().copied().filter(|&z| row[z] <= r).collect(),
                mass: table.ball_mass(y, r),
            }
        })
        .collect()
}

/// A net together with its balls, as returned by [`build_rank_net`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankNet {
    pub root: ItemId,
    pub domain: Vec<ItemId>,
    pub domain_mass: f64,
    pub rho: f64,
    /// Members in scan order.
    pub members: Vec<ItemId>,
    /// `balls[i]` belongs to `members[i]`.
    pub balls: Vec<Ball>,
    pub radii: Vec<RadiusRank>,
    /// One entry per ρ tried, in order.
    pub attempts: Vec<Attempt>,
}

/// Cost of one ρ attempt of [`build_rank_net`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub rho: f64,
    pub net_size: usize,
    pub table_lookups: u64,
}

impl RankNet {
    /// Largest global mass among balls of nonzero radius, if any.
    pub fn max_ball_mass(&self) -> Option<f64> {
        self.balls
            .iter()
            .filter(|b| !b.is_leaf())
            .map(|b| b.mass)
            .reduce(f64::max)
    }

    /// Checks the size, ball-mass and final-ρ bounds for doubling
    /// constant `c`.
    pub fn check_bounds(&self, c: f64) -> BoundCheck {
        BoundCheck::evaluate(
            self.members.len(),
            self.rho,
            self.domain_mass,
            self.max_ball_mass(),
            c,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub size: usize,
    pub size_bound: f64,
    pub size_ok: bool,
    pub max_ball_mass: Option<f64>,
    pub mass_bound: f64,
    pub mass_ok: bool,
    pub rho: f64,
    pub rho_bound: f64,
    pub rho_ok: bool,
}

impl BoundCheck {
    /// Net size at most `c³/ρ`, nonzero-radius ball mass at most
    /// `c³·ρ·μ(E)`, and final `ρ > 1/(4c³)`.
    pub fn evaluate(
        size: usize,
        rho: f64,
        domain_mass: f64,
        max_ball_mass: Option<f64>,
        c: f64,
    ) -> Self {
        let c3 = c.powi(3);
        let size_bound = c3 / rho;
        let mass_bound = c3 * rho * domain_mass;
        let rho_bound = 1.0 / (4.0 * c3);
        BoundCheck {
            size,
            size_bound,
            size_ok: size as f64 <= size_bound * (1.0 + 1e-12),
            max_ball_mass,
            mass_bound,
            mass_ok: max_ball_mass.is_none_or(|m| m <= mass_bound + MASS_EPS),
            rho,
            rho_bound,
            rho_ok: rho > rho_bound,
        }
    }

    pub fn all_ok(&self) -> bool {
        self.size_ok && self.mass_ok && self.rho_ok
    }
}

/// Halves ρ (starting from 1/2) until every ball of nonzero radius has
/// global mass at most `μ(E)/2`. The domain's order is the greedy scan
/// order. Items without prior mass are dropped from the domain.
pub fn build_rank_net(table: &RankTable, root: ItemId, domain: &[ItemId]) -> Result<RankNet> {
    build_rank_net_counted(table, root, domain, &mut CostCounters::default())
}

pub fn build_rank_net_counted(
    table: &RankTable,
    root: ItemId,
    domain: &[ItemId],
    counters: &mut CostCounters,
) -> Result<RankNet> {
    if domain.is_empty() {
        return Err(Error::NetConstruction("empty domain".into()));
    }
    // massless items can never be targets, and their radii would reach
    // past their neighbours to find mass
    let domain: Vec<ItemId> = domain
        .iter()
        .copied()
        .filter(|&z| table.mass(z) > 0.0)
        .collect();
    let domain = domain.as_slice();
    counters.mass_additions += domain.len() as u64;
    let domain_mass: f64 = domain.iter().map(|&z| table.mass(z)).sum();
    let min_mass = domain
        .iter()
        .map(|&z| table.mass(z))
        .reduce(f64::min)
        .ok_or_else(|| Error::NetConstruction("domain carries no prior mass".into()))?;
    let floor = min_mass / domain_mass / 1024.0;

    let mut rho = 1.0;
    let mut attempts = Vec::new();
    loop {
        rho /= 2.0;
        if rho < floor {
            return Err(Error::NetConstruction(format!(
                "rho fell to {rho:e} on a domain of {} items without meeting the mass test",
                domain.len()
            )));
        }
        let mut c = CostCounters::default();
        let threshold = rho * domain_mass;
        let radii: Vec<RadiusRank> = domain
            .iter()
            .map(|&y| radius_rank_for(table, y, threshold, &mut c))
            .collect();
        let picked = greedy_from_radii(table, &radii, &mut c);
        let members: Vec<ItemId> = picked.iter().map(|&i| domain[i]).collect();
        let balls = voronoi_counted(table, domain, &members, &mut c);
        attempts.push(Attempt {
            rho,
            net_size: members.len(),
            table_lookups: c.table_lookups,
        });
        *counters += c;

        let done = balls
            .iter()
            .filter(|b| !b.is_leaf())
            .all(|b| b.mass <= 0.5 * domain_mass + MASS_EPS);
        if done {
            return Ok(RankNet {
                root,
                domain: domain.to_vec(),
                domain_mass,
                rho,
                radii: picked.iter().map(|&i| radii[i]).collect(),
                members,
                balls,
                attempts,
            });
        }
    }
}
