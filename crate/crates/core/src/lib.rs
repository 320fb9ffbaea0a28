//! Comparison-based nearest-neighbour search with rank nets.
//!
//! Items live in a metric space that search code never sees directly: a
//! [`RankTable`] holds, for every item, the order of all others by
//! distance. Searches only ask comparison queries "is the target closer to
//! `x` than to `y`?" and are driven through [`Session`].

pub mod bench;
pub mod counters;
pub mod dataset;
pub mod error;
pub mod gbs;
pub mod net;
pub mod oracle;
pub mod prior;
pub mod search;
pub mod tree;

#[cfg(test)]
pub(crate) mod testutil;

pub type ItemId = usize;

pub use counters::CostCounters;
pub use dataset::{gen_l1_ball, load_csv, read_csv, Dataset, Metric};
pub use error::{Error, Result};
pub use gbs::{GbsVariant, PairSet};
pub use net::{build_rank_net, RankNet};
pub use oracle::{Answer, ExactOracle, NoisyOracle, Oracle, QueryLog, RankTable};
pub use prior::{make_prior, DatasetStats, Prior, PriorSpec};
pub use search::{drive, Algorithm, NoiseParams, SearchContext, SearchOutcome, Session, Step};
pub use tree::RankNetTree;
