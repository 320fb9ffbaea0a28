pub mod service;

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ranknet::bench::{run_bench, AlgoName, DatasetSpec, ExperimentConfig, Prepared, TreeSummary};
use ranknet::oracle::NoisyOracle;
use ranknet::search::{drive, NoiseParams, RepetitionForm};
use ranknet::{gen_l1_ball, ExactOracle, Metric, Oracle, PriorSpec, Session};
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ranknet::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "ranknet",
    version,
    about = "Comparison-based target search with rank nets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a dataset to CSV.
    Gen(GenArgs),
    /// Print size, entropy and doubling constant.
    Stats(DataArgs),
    /// Build the rank table.
    Table(OutArgs),
    /// Build the rank-net tree.
    Tree(TreeArgs),
    /// Search for one target with a simulated oracle.
    Search(SearchArgs),
    /// Run an experiment and write its report.
    Bench(BenchArgs),
    /// Serve the HTTP session API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenKind {
    L1Ball,
    L4,
    Iris,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "l1-ball")]
    pub kind: GenKind,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Dataset, prior and metric shared by most subcommands.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// `l4`, `iris`, `l1-ball:<n>:<dim>[:<seed>]` or a CSV path.
    pub dataset: DatasetSpec,
    /// `uniform`, `powerlaw:<alpha>[:identity]` or `explicit:<w1>,<w2>,...`
    #[arg(long, default_value = "powerlaw:0.4")]
    pub prior: PriorSpec,
    #[arg(long, default_value = "euclidean")]
    pub metric: Metric,
    /// Seeds the prior's rank permutation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl DataArgs {
    fn prepare(&self) -> Result<Prepared, CliError> {
        Ok(Prepared::from_spec(
            &self.dataset,
            &self.prior,
            self.metric,
            self.seed,
        )?)
    }
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    /// Probability that a simulated answer is flipped; also selects the
    /// noisy tournament search's tolerance.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Use the `(1 - ε)²` repetition denominator.
    #[arg(long)]
    pub printed_repetition: bool,
}

impl NoiseArgs {
    fn params(&self) -> Result<Option<NoiseParams>, CliError> {
        self.epsilon
            .map(|eps| {
                let mut p = NoiseParams::new(eps, self.delta)?;
                if self.printed_repetition {
                    p.form = RepetitionForm::Printed;
                }
                Ok(p)
            })
            .transpose()
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub target: usize,
    #[arg(long, default_value = "tree")]
    pub algo: AlgoName,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Seeds the noisy oracle.
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    /// Write the query transcript (JSON lines).
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset; optional when `--config` is given.
    pub dataset: Option<DatasetSpec>,
    /// Experiment config as JSON; other flags are ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "ranknet,tree,fgbs,sgbs")]
    pub algos: Vec<AlgoName>,
    #[arg(long, default_value = "powerlaw:0.4")]
    pub prior: PriorSpec,
    #[arg(long, default_value = "euclidean")]
    pub metric: Metric,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// `name=spec`, repeatable. Defaults to the built-in `l4` and `iris`.
    #[arg(long = "dataset")]
    pub datasets: Vec<String>,
    #[arg(long, default_value = "powerlaw:0.4")]
    pub prior: PriorSpec,
    #[arg(long, default_value = "euclidean")]
    pub metric: Metric,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Idle seconds before a session is dropped.
    #[arg(long, default_value_t = 3600)]
    pub ttl: u64,
}

/// Runs one command and returns what it prints on stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Stats(a) => {
            let p = a.prepare()?;
            let stats = p.stats();
            Ok(serde_json::to_string_pretty(&json!({
                "dataset": p.dataset.name(),
                "n": stats.n,
                "dim": stats.dim,
                "entropy_bits": stats.entropy_bits,
                "hmax_bits": stats.hmax_bits,
                "doubling_constant": stats.doubling_constant,
                "doubling_dimension": stats.doubling_dimension(),
            }))?)
        }
        Command::Table(a) => {
            let p = a.data.prepare()?;
            p.table().save(&a.output)?;
            let classes: usize = (0..p.table().len()).map(|z| p.table().class_count(z)).sum();
            Ok(json!({ "n": p.table().len(), "classes": classes, "output": a.output }).to_string())
        }
        Command::Tree(a) => {
            let p = a.data.prepare()?;
            if let Some(path) = &a.output {
                p.tree().save(path)?;
            }
            Ok(serde_json::to_string_pretty(&TreeSummary::of(p.tree()))?)
        }
        Command::Search(a) => search(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve(a),
    }
}

fn gen(a: GenArgs) -> Result<String, CliError> {
    let ds = match a.kind {
        GenKind::L1Ball => gen_l1_ball(a.n, a.dim, a.radius, a.seed)?,
        GenKind::L4 => ranknet::bench::builtin("l4")?,
        GenKind::Iris => ranknet::bench::builtin("iris")?,
    };
    ds.write_csv(&a.output)?;
    Ok(json!({ "n": ds.len(), "dim": ds.dim(), "output": a.output }).to_string())
}

fn search(a: SearchArgs) -> Result<String, CliError> {
    let p = a.data.prepare()?;
    let n = p.table().len();
    if a.target >= n {
        return Err(CliError::Usage(format!(
            "target {} out of range for {n} items",
            a.target
        )));
    }
    let noise = a.noise.params()?;
    let mut session = Session::new(&p.context, a.algo.algorithm(noise)?)?;
    let exact = ExactOracle::new(p.table(), a.target);
    let mut oracle: Box<dyn Oracle> = match noise {
        Some(params) => Box::new(NoisyOracle::new(exact, params.epsilon, a.noise_seed)?),
        None => Box::new(exact),
    };
    let out = drive(&mut session, &mut oracle)?;
    if let Some(path) = &a.transcript {
        write_file(path, &session.transcript())?;
    }
    Ok(serde_json::to_string_pretty(&json!({
        "target": a.target,
        "result": out.result,
        "found": out.result == a.target || p.table().indistinguishable(out.result, a.target),
        "queries": out.queries,
        "computational_cost": out.counters.computational(),
        "counters": out.counters,
    }))?)
}

fn bench(a: BenchArgs) -> Result<String, CliError> {
    let config = match (&a.config, &a.dataset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str(&text)?
        }
        (None, Some(dataset)) => {
            let noise = a.noise.params()?;
            let mut algos = a.algos.clone();
            if noise.is_some() && !algos.contains(&AlgoName::Noisy) {
                algos.push(AlgoName::Noisy);
            }
            ExperimentConfig {
                dataset: dataset.clone(),
                prior: a.prior.clone(),
                metric: a.metric,
                algorithms: algos,
                noise,
                trials: a.trials.or(noise.map(|_| 200)),
                seed: a.seed,
            }
        }
        (None, None) => return Err(CliError::Usage("bench needs a dataset or --config".into())),
    };
    let report = run_bench(&config)?;
    let text = report.to_json();
    match &a.output {
        Some(path) => {
            write_file(path, &text)?;
            let mut lines = vec![format!(
                "{:<8} {:>12} {:>16} {:>8}",
                "algo", "queries", "cost/search", "success"
            )];
            for r in &report.algorithms {
                lines.push(format!(
                    "{:<8} {:>12.3} {:>16.1} {:>8.3}",
                    r.algorithm.as_str(),
                    r.expected_queries,
                    r.expected_cost,
                    r.success_rate
                ));
            }
            Ok(lines.join("\n"))
        }
        None => Ok(text),
    }
}

/// Parses `name=spec` (or a bare built-in name) into a registry entry.
pub fn dataset_entry(
    arg: &str,
    prior: &PriorSpec,
    metric: Metric,
    seed: u64,
) -> Result<service::DatasetEntry, CliError> {
    let (name, spec) = arg.split_once('=').unwrap_or((arg, arg));
    let spec: DatasetSpec = spec.parse()?;
    Ok(service::DatasetEntry::new(
        name,
        Prepared::from_spec(&spec, prior, metric, seed)?,
    ))
}

fn serve(a: ServeArgs) -> Result<String, CliError> {
    let args = if a.datasets.is_empty() {
        vec!["l4".to_string(), "iris".to_string()]
    } else {
        a.datasets.clone()
    };
    let entries = args
        .iter()
        .map(|d| dataset_entry(d, &a.prior, a.metric, a.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad listen address: {e}")))?;
    let app = Arc::new(service::AppState::new(entries, Duration::from_secs(a.ttl)));
    let rt = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
        path: "tokio runtime".into(),
        source,
    })?;
    rt.block_on(service::serve(app, addr))
        .map_err(|source| CliError::Io {
            path: addr.to_string().into(),
            source,
        })?;
    Ok(String::new())
}
