use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Work done by a search, kept apart from the number of oracle queries.
///
/// One unit per rank-table lookup (an `O_z(x, y)` answer, a class index or
/// a cumulative-mass read) and one per mass addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    pub oracle_queries: u64,
    pub table_lookups: u64,
    pub mass_additions: u64,
    /// Candidate pairs scored by a GBS-style objective. Each costs |V|
    /// lookups, already included in `table_lookups`.
    pub pair_evaluations: u64,
}

impl CostCounters {
    /// Computational cost: lookups plus mass additions.
    pub fn computational(&self) -> u64 {
        self.table_lookups + self.mass_additions
    }
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, o: Self) {
        self.oracle_queries += o.oracle_queries;
        self.table_lookups += o.table_lookups;
        self.mass_additions += o.mass_additions;
        self.pair_evaluations += o.pair_evaluations;
    }
}

impl Add for CostCounters {
    type Output = Self;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}
