//! Experiment runner and JSON reports.
//!
//! Noiseless algorithms are evaluated exactly: every target in the prior's
//! support is searched once and costs are mass-weighted. Noisy runs are
//! Monte Carlo over targets drawn from the prior, one rng stream per trial.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counters::CostCounters;
use crate::dataset::{gen_l1_ball, load_csv, read_csv, Dataset, Metric};
use crate::error::{Error, Result};
use crate::gbs::{policy_outcomes, GbsVariant, PairSet, FULL_GBS_MAX_N};
use crate::oracle::{ExactOracle, NoisyOracle, RankTable};
use crate::prior::{make_prior, DatasetStats, Prior, PriorSpec};
use crate::search::{run, Algorithm, NoiseParams, RepetitionForm, SearchContext};
use crate::tree::RankNetTree;
use crate::ItemId;

const IRIS_CSV: &str = include_str!("../data/iris.csv");

pub const REPORT_FORMAT: &str = "ranknet-report";
pub const REPORT_VERSION: u32 = 1;

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    /// `l4` (points 0, 1, 3, 7 on a line) or `iris` (150 flowers).
    Builtin {
        name: String,
    },
    Csv {
        path: PathBuf,
    },
    L1Ball {
        n: usize,
        dim: usize,
        #[serde(default = "unit_radius")]
        radius: f64,
        seed: u64,
    },
}

fn unit_radius() -> f64 {
    1.0
}

pub const BUILTIN_DATASETS: [&str; 2] = ["l4", "iris"];

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Builtin { name } => builtin(name),
            DatasetSpec::Csv { path } => load_csv(path),
            DatasetSpec::L1Ball {
                n,
                dim,
                radius,
                seed,
            } => gen_l1_ball(*n, *dim, *radius, *seed),
        }
    }
}

pub fn builtin(name: &str) -> Result<Dataset> {
    match name {
        "l4" => Dataset::from_line("l4", &[0.0, 1.0, 3.0, 7.0]),
        "iris" => read_csv("iris", IRIS_CSV.as_bytes()),
        _ => Err(Error::Unknown {
            kind: "dataset",
            name: name.into(),
        }),
    }
}

/// `l4`, `iris`, `l1-ball:<n>:<dim>[:<seed>]`, or a CSV path.
impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if BUILTIN_DATASETS.contains(&s) {
            return Ok(DatasetSpec::Builtin { name: s.into() });
        }
        if let Some(rest) = s.strip_prefix("l1-ball:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let num = |p: &str| {
                p.parse::<u64>().map_err(|_| {
                    Error::InvalidParameter(format!("bad number {p:?} in dataset spec {s:?}"))
                })
            };
            return match parts.as_slice() {
                [n, dim] | [n, dim, _] => Ok(DatasetSpec::L1Ball {
                    n: num(n)? as usize,
                    dim: num(dim)? as usize,
                    radius: 1.0,
                    seed: parts.get(2).map(|p| num(p)).transpose()?.unwrap_or(0),
                }),
                _ => Err(Error::InvalidParameter(format!(
                    "expected l1-ball:<n>:<dim>[:<seed>], got {s:?}"
                ))),
            };
        }
        Ok(DatasetSpec::Csv { path: s.into() })
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Builtin { name } => f.write_str(name),
            DatasetSpec::Csv { path } => write!(f, "{}", path.display()),
            DatasetSpec::L1Ball { n, dim, seed, .. } => write!(f, "l1-ball:{n}:{dim}:{seed}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoName {
    Ranknet,
    Tree,
    Noisy,
    Gbs,
    Fgbs,
    Sgbs,
}

impl AlgoName {
    pub const ALL: [AlgoName; 6] = [
        AlgoName::Ranknet,
        AlgoName::Tree,
        AlgoName::Noisy,
        AlgoName::Gbs,
        AlgoName::Fgbs,
        AlgoName::Sgbs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgoName::Ranknet => "ranknet",
            AlgoName::Tree => "tree",
            AlgoName::Noisy => "noisy",
            AlgoName::Gbs => "gbs",
            AlgoName::Fgbs => "fgbs",
            AlgoName::Sgbs => "sgbs",
        }
    }

    pub fn is_noisy(self) -> bool {
        self == AlgoName::Noisy
    }

    pub fn algorithm(self, noise: Option<NoiseParams>) -> Result<Algorithm> {
        Ok(match self {
            AlgoName::Ranknet => Algorithm::RankNet,
            AlgoName::Tree => Algorithm::Tree,
            AlgoName::Noisy => Algorithm::Noisy(noise.ok_or_else(|| {
                Error::InvalidParameter("the noisy algorithm needs epsilon and delta".into())
            })?),
            AlgoName::Gbs => Algorithm::Gbs {
                variant: GbsVariant::Full,
            },
            AlgoName::Fgbs => Algorithm::Gbs {
                variant: GbsVariant::Fast,
            },
            AlgoName::Sgbs => Algorithm::Gbs {
                variant: GbsVariant::Sparse,
            },
        })
    }
}

impl FromStr for AlgoName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .collect();
        AlgoName::ALL
            .into_iter()
            .find(|a| a.as_str() == key)
            .ok_or_else(|| Error::Unknown {
                kind: "algorithm",
                name: s.into(),
            })
    }
}

impl fmt::Display for AlgoName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub metric: Metric,
    pub algorithms: Vec<AlgoName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec, algorithms: Vec<AlgoName>) -> Self {
        ExperimentConfig {
            dataset,
            prior: PriorSpec::default(),
            metric: Metric::default(),
            algorithms,
            noise: None,
            trials: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::InvalidParameter("no algorithms selected".into()));
        }
        if self.algorithms.iter().any(|a| a.is_noisy()) {
            self.noise
                .ok_or_else(|| {
                    Error::InvalidParameter("the noisy algorithm needs epsilon and delta".into())
                })?
                .validate()?;
            if self.trials.unwrap_or(0) == 0 {
                return Err(Error::InvalidParameter(
                    "noisy runs need at least one trial".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A dataset with its prior, rank table and tree, ready for searching.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub metric: Metric,
    pub prior: Prior,
    pub context: SearchContext,
}

impl Prepared {
    pub fn new(dataset: Dataset, metric: Metric, prior: Prior) -> Result<Self> {
        let table = RankTable::build(&dataset, metric, &prior)?;
        let context = SearchContext::with_tree(table)?;
        Ok(Prepared {
            dataset,
            metric,
            prior,
            context,
        })
    }

    pub fn from_spec(
        spec: &DatasetSpec,
        prior: &PriorSpec,
        metric: Metric,
        seed: u64,
    ) -> Result<Self> {
        let dataset = spec.load()?;
        let prior = make_prior(dataset.len(), prior, seed)?;
        Self::new(dataset, metric, prior)
    }

    pub fn table(&self) -> &RankTable {
        &self.context.table
    }

    pub fn tree(&self) -> &RankNetTree {
        self.context
            .tree
            .as_deref()
            .expect("prepared contexts carry a tree")
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats::compute(&self.dataset, self.metric, &self.prior)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub nodes: usize,
    pub leaves: usize,
    pub depth: u32,
    pub same_net_pairs: usize,
}

impl TreeSummary {
    pub fn of(tree: &RankNetTree) -> Self {
        TreeSummary {
            nodes: tree.node_count(),
            leaves: tree.leaf_count(),
            depth: tree.depth(),
            same_net_pairs: tree.same_net_pairs().len(),
        }
    }
}

/// Mass-weighted (or trial-averaged) counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanCounters {
    pub oracle_queries: f64,
    pub table_lookups: f64,
    pub mass_additions: f64,
    pub pair_evaluations: f64,
}

impl MeanCounters {
    fn add_weighted(&mut self, c: &CostCounters, w: f64) {
        self.oracle_queries += w * c.oracle_queries as f64;
        self.table_lookups += w * c.table_lookups as f64;
        self.mass_additions += w * c.mass_additions as f64;
        self.pair_evaluations += w * c.pair_evaluations as f64;
    }

    pub fn computational(&self) -> f64 {
        self.table_lookups + self.mass_additions
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub target: ItemId,
    pub result: ItemId,
    pub correct: bool,
    pub queries: u64,
    pub cost: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoReport {
    pub algorithm: AlgoName,
    pub expected_queries: f64,
    /// Standard error of the mean; noisy runs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries_stderr: Option<f64>,
    pub expected_cost: f64,
    pub mean_counters: MeanCounters,
    pub success_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Per target for noiseless runs, per trial for noisy ones.
    pub targets: Vec<TargetRecord>,
}

impl AlgoReport {
    fn noiseless(
        algorithm: AlgoName,
        prior: &Prior,
        targets: Vec<(TargetRecord, CostCounters)>,
    ) -> Self {
        let mut mean = MeanCounters::default();
        let mut expected = 0.0;
        let mut missed = 0.0;
        for (r, c) in &targets {
            let w = prior.mass(r.target);
            expected += w * r.queries as f64;
            mean.add_weighted(c, w);
            if !r.correct {
                missed += w;
            }
        }
        AlgoReport {
            algorithm,
            expected_queries: expected,
            queries_stderr: None,
            expected_cost: mean.computational(),
            mean_counters: mean,
            success_rate: 1.0 - missed,
            trials: None,
            targets: targets.into_iter().map(|(r, _)| r).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub config: ExperimentConfig,
    pub dataset: String,
    pub stats: DatasetStats,
    pub tree: TreeSummary,
    pub algorithms: Vec<AlgoReport>,
}

impl Report {
    pub fn algorithm(&self, name: AlgoName) -> Option<&AlgoReport> {
        self.algorithms.iter().find(|a| a.algorithm == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

pub fn run_bench(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let prepared = Prepared::from_spec(&config.dataset, &config.prior, config.metric, config.seed)?;
    let algorithms = config
        .algorithms
        .iter()
        .map(|&a| {
            evaluate(
                &prepared,
                a,
                config.noise,
                config.trials.unwrap_or(0),
                config.seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Report {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        config: config.clone(),
        dataset: prepared.dataset.name().to_string(),
        stats: prepared.stats(),
        tree: TreeSummary::of(prepared.tree()),
        algorithms,
    })
}

/// Search found the target or an item at distance zero from it.
fn found(table: &RankTable, target: ItemId, result: ItemId) -> bool {
    result == target || table.indistinguishable(result, target)
}

/// Evaluates one algorithm. `trials` and `seed` only matter for the noisy
/// algorithm.
pub fn evaluate(
    prepared: &Prepared,
    algo: AlgoName,
    noise: Option<NoiseParams>,
    trials: usize,
    seed: u64,
) -> Result<AlgoReport> {
    let table = prepared.table();
    let ctx = &prepared.context;
    let algorithm = algo.algorithm(noise)?;
    let support: Vec<ItemId> = prepared.prior.support().collect();
    match algorithm {
        Algorithm::Gbs { variant } => {
            if variant == GbsVariant::Full && table.len() > FULL_GBS_MAX_N {
                return Err(Error::TooLarge {
                    n: table.len(),
                    max: FULL_GBS_MAX_N,
                });
            }
            let pairs = match variant {
                GbsVariant::Full => PairSet::All,
                GbsVariant::Fast => PairSet::WithinVersionSpace,
                GbsVariant::Sparse => ctx.same_net_pairs.as_deref().expect("prepared").clone(),
            };
            let outcomes = policy_outcomes(table, &pairs)?;
            let records = outcomes
                .into_iter()
                .map(|o| {
                    (
                        TargetRecord {
                            target: o.target,
                            result: o.result,
                            correct: found(table, o.target, o.result),
                            queries: o.queries,
                            cost: o.counters.computational(),
                        },
                        o.counters,
                    )
                })
                .collect();
            Ok(AlgoReport::noiseless(algo, &prepared.prior, records))
        }
        Algorithm::RankNet | Algorithm::Tree => {
            let records = support
                .par_iter()
                .map(|&t| {
                    let out = run(ctx, algorithm, &mut ExactOracle::new(table, t))?;
                    Ok((
                        TargetRecord {
                            target: t,
                            result: out.result,
                            correct: found(table, t, out.result),
                            queries: out.queries as u64,
                            cost: out.counters.computational(),
                        },
                        out.counters,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AlgoReport::noiseless(algo, &prepared.prior, records))
        }
        Algorithm::Noisy(params) => noisy_trials(prepared, algo, params, trials, seed),
    }
}

/// Independent rng stream for one noisy trial.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

fn noisy_trials(
    prepared: &Prepared,
    algo: AlgoName,
    params: NoiseParams,
    trials: usize,
    seed: u64,
) -> Result<AlgoReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter(
            "noisy runs need at least one trial".into(),
        ));
    }
    let table = prepared.table();
    let picker = WeightedIndex::new(prepared.prior.masses())
        .map_err(|e| Error::InvalidParameter(format!("cannot sample from the prior: {e}")))?;
    let runs = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let target = picker.sample(&mut rng);
            let mut oracle = NoisyOracle::new(
                ExactOracle::new(table, target),
                params.epsilon,
                rng.next_u64(),
            )?;
            let out = run(&prepared.context, Algorithm::Noisy(params), &mut oracle)?;
            Ok((
                TargetRecord {
                    target,
                    result: out.result,
                    correct: found(table, target, out.result),
                    queries: out.queries as u64,
                    cost: out.counters.computational(),
                },
                out.counters,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let w = 1.0 / trials as f64;
    let mut mean = MeanCounters::default();
    for (_, c) in &runs {
        mean.add_weighted(c, w);
    }
    let queries: Vec<f64> = runs.iter().map(|(r, _)| r.queries as f64).collect();
    let avg = queries.iter().sum::<f64>() * w;
    let stderr = if trials > 1 {
        let var = queries.iter().map(|q| (q - avg).powi(2)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    } else {
        0.0
    };
    let success = runs.iter().filter(|(r, _)| r.correct).count() as f64 * w;
    Ok(AlgoReport {
        algorithm: algo,
        expected_queries: avg,
        queries_stderr: Some(stderr),
        expected_cost: mean.computational(),
        mean_counters: mean,
        success_rate: success,
        trials: Some(trials),
        targets: runs.into_iter().map(|(r, _)| r).collect(),
    })
}

/// Default noise settings for the CLI: the half-gap repetition form.
pub fn noise(epsilon: f64, delta: f64, printed_form: bool) -> Result<NoiseParams> {
    let mut p = NoiseParams::new(epsilon, delta)?;
    if printed_form {
        p.form = RepetitionForm::Printed;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l4_config(algos: Vec<AlgoName>) -> ExperimentConfig {
        ExperimentConfig {
            prior: PriorSpec::Uniform,
            ..ExperimentConfig::new(DatasetSpec::Builtin { name: "l4".into() }, algos)
        }
    }

    #[test]
    fn l4_expected_queries() {
        let r = run_bench(&l4_config(vec![
            AlgoName::Ranknet,
            AlgoName::Tree,
            AlgoName::Gbs,
        ]))
        .unwrap();
        let ranknet = r.algorithm(AlgoName::Ranknet).unwrap();
        // per-target traces 3, 3, 2, 2
        assert_eq!(ranknet.expected_queries, 2.5);
        assert_eq!(ranknet.success_rate, 1.0);
        assert_eq!(r.algorithm(AlgoName::Tree).unwrap().expected_queries, 2.5);
        assert_eq!(r.algorithm(AlgoName::Gbs).unwrap().expected_queries, 2.0);
        assert_eq!(r.tree.nodes, 2);
        assert_eq!(r.stats.n, 4);
    }

    #[test]
    fn parsing() {
        assert_eq!("f-gbs".parse::<AlgoName>().unwrap(), AlgoName::Fgbs);
        assert_eq!("SGBS".parse::<AlgoName>().unwrap(), AlgoName::Sgbs);
        assert!("bogus".parse::<AlgoName>().is_err());
        assert_eq!(
            "l1-ball:100:3:7".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::L1Ball {
                n: 100,
                dim: 3,
                radius: 1.0,
                seed: 7
            }
        );
        assert_eq!(
            "data.csv".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::Csv {
                path: "data.csv".into()
            }
        );
        assert!("l1-ball:x:3".parse::<DatasetSpec>().is_err());
    }

    #[test]
    fn config_errors() {
        let mut c = l4_config(vec![AlgoName::Noisy]);
        assert!(run_bench(&c).is_err());
        c.noise = Some(NoiseParams::new(0.1, 0.1).unwrap());
        assert!(run_bench(&c).is_err());
        c.trials = Some(3);
        assert!(run_bench(&c).is_ok());
        assert!(run_bench(&l4_config(vec![])).is_err());
        let big = ExperimentConfig::new("l1-ball:300:2:1".parse().unwrap(), vec![AlgoName::Gbs]);
        assert!(matches!(
            run_bench(&big),
            Err(Error::TooLarge { n: 300, .. })
        ));
    }

    #[test]
    fn iris_builtin() {
        let ds = builtin("iris").unwrap();
        assert_eq!((ds.len(), ds.dim()), (150, 4));
        assert_eq!(ds.item(101), ds.item(142));
    }
}
