//! Python bindings for the `ranknet` crate.

use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use ranknet::bench::{self, AlgoName, DatasetSpec, ExperimentConfig, Prepared, TreeSummary};
use ranknet::search::{drive, NoiseParams, Step};
use ranknet::{Answer, ExactOracle, Metric, NoisyOracle, Oracle, PriorSpec};

create_exception!(pyranknet, RankNetError, PyValueError);

fn err(e: ranknet::Error) -> PyErr {
    RankNetError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = ranknet::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| RankNetError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn noise_params(epsilon: Option<f64>, delta: Option<f64>) -> PyResult<Option<NoiseParams>> {
    match (epsilon, delta) {
        (None, None) => Ok(None),
        (e, d) => NoiseParams::new(e.unwrap_or(0.1), d.unwrap_or(0.1))
            .map(Some)
            .map_err(err),
    }
}

/// A set of items with numeric features.
#[pyclass(frozen, skip_from_py_object, module = "pyranknet")]
#[derive(Clone)]
struct Dataset {
    inner: ranknet::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (rows, name = "data"))]
    fn new(rows: Vec<Vec<f64>>, name: &str) -> PyResult<Self> {
        ranknet::Dataset::new(name, rows)
            .map(|inner| Dataset { inner })
            .map_err(err)
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn item(&self, id: usize) -> PyResult<Vec<f64>> {
        if id >= self.inner.len() {
            return Err(PyIndexError::new_err(format!("item {id} out of range")));
        }
        Ok(self.inner.item(id).to_vec())
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.items().map(<[f64]>::to_vec).collect()
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv(path).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({:?}, n={}, dim={})",
            self.inner.name(),
            self.inner.len(),
            self.inner.dim()
        )
    }
}

/// Uniform points in an L1 ball.
#[pyfunction]
#[pyo3(signature = (n, dim, radius = 1.0, seed = 0))]
fn gen_l1_ball(n: usize, dim: usize, radius: f64, seed: u64) -> PyResult<Dataset> {
    ranknet::gen_l1_ball(n, dim, radius, seed)
        .map(|inner| Dataset { inner })
        .map_err(err)
}

/// Loads `"l4"`, `"iris"`, `"l1-ball:n:dim[:seed]"` or a CSV path.
#[pyfunction]
fn load_dataset(spec: &str) -> PyResult<Dataset> {
    parse::<DatasetSpec>(spec)?
        .load()
        .map(|inner| Dataset { inner })
        .map_err(err)
}

/// Prior masses for `n` items, e.g. `"uniform"` or `"powerlaw:0.4"`.
#[pyfunction]
#[pyo3(signature = (n, spec = "powerlaw:0.4", seed = 0))]
fn make_prior(n: usize, spec: &str, seed: u64) -> PyResult<Vec<f64>> {
    let spec: PriorSpec = parse(spec)?;
    ranknet::make_prior(n, &spec, seed)
        .map(|p| p.masses().to_vec())
        .map_err(err)
}

#[pyclass(frozen, module = "pyranknet")]
struct RankTable {
    inner: Arc<ranknet::RankTable>,
}

impl RankTable {
    fn check(&self, ids: &[usize]) -> PyResult<()> {
        match ids.iter().find(|&&i| i >= self.inner.len()) {
            Some(i) => Err(PyIndexError::new_err(format!("item {i} out of range"))),
            None => Ok(()),
        }
    }
}

#[pymethods]
impl RankTable {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// +1 if `x` is closer to `z` than `y`, -1 if farther, 0 on a tie.
    fn answer(&self, z: usize, x: usize, y: usize) -> PyResult<i8> {
        self.check(&[z, x, y])?;
        Ok(self.inner.answer(z, x, y).sign())
    }

    fn rank_of(&self, z: usize, x: usize) -> PyResult<u32> {
        self.check(&[z, x])?;
        Ok(self.inner.rank_of(z, x))
    }

    fn ball_mass(&self, z: usize, k: u32) -> PyResult<f64> {
        self.check(&[z])?;
        if k == 0 || k as usize > self.inner.class_count(z) {
            return Err(PyIndexError::new_err(format!("class {k} out of range")));
        }
        Ok(self.inner.ball_mass(z, k))
    }

    fn masses(&self) -> Vec<f64> {
        self.inner.masses().to_vec()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }
}

#[pyclass(frozen, module = "pyranknet")]
struct RankNetTree {
    inner: Arc<ranknet::RankNetTree>,
}

#[pymethods]
impl RankNetTree {
    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn leaf_count(&self) -> usize {
        self.inner.leaf_count()
    }

    #[getter]
    fn depth(&self) -> u32 {
        self.inner.depth()
    }

    fn root_members(&self) -> Vec<usize> {
        self.inner.root().members.clone()
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &TreeSummary::of(&self.inner))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }
}

/// A dataset with its prior, rank table and rank-net tree.
#[pyclass(frozen, module = "pyranknet")]
struct Index {
    inner: Arc<Prepared>,
}

#[pymethods]
impl Index {
    #[new]
    #[pyo3(signature = (dataset, prior = "powerlaw:0.4", metric = "euclidean", seed = 0, weights = None))]
    fn new(
        py: Python<'_>,
        dataset: &Dataset,
        prior: &str,
        metric: &str,
        seed: u64,
        weights: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let metric: Metric = parse(metric)?;
        let prior = match weights {
            Some(w) => ranknet::Prior::from_weights(w),
            None => ranknet::make_prior(dataset.inner.len(), &parse(prior)?, seed),
        }
        .map_err(err)?;
        let ds = dataset.inner.clone();
        let inner = py
            .detach(|| Prepared::new(ds, metric, prior))
            .map_err(err)?;
        Ok(Index {
            inner: Arc::new(inner),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.dataset.len()
    }

    #[getter]
    fn table(&self) -> RankTable {
        RankTable {
            inner: self.inner.context.table.clone(),
        }
    }

    #[getter]
    fn tree(&self) -> Option<RankNetTree> {
        self.inner
            .context
            .tree
            .clone()
            .map(|inner| RankNetTree { inner })
    }

    fn prior(&self) -> Vec<f64> {
        self.inner.prior.masses().to_vec()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let p = self.inner.clone();
        let stats = py.detach(move || p.stats());
        to_py(py, &stats)
    }

    /// Starts an interactive session in which the caller answers queries.
    #[pyo3(signature = (algorithm = "tree", epsilon = None, delta = None))]
    fn session(
        &self,
        algorithm: &str,
        epsilon: Option<f64>,
        delta: Option<f64>,
    ) -> PyResult<Session> {
        let name: AlgoName = parse(algorithm)?;
        let alg = name.algorithm(noise_params(epsilon, delta)?).map_err(err)?;
        ranknet::Session::new(&self.inner.context, alg)
            .map(|inner| Session { inner })
            .map_err(err)
    }

    /// Runs a search against a simulated oracle for `target`.
    #[pyo3(signature = (target, algorithm = "tree", epsilon = None, delta = None, noise_seed = 0))]
    fn search<'py>(
        &self,
        py: Python<'py>,
        target: usize,
        algorithm: &str,
        epsilon: Option<f64>,
        delta: Option<f64>,
        noise_seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let table = &self.inner.context.table;
        if target >= table.len() {
            return Err(PyIndexError::new_err(format!(
                "target {target} out of range"
            )));
        }
        let mut session = self.session(algorithm, epsilon, delta)?;
        let noise = noise_params(epsilon, delta)?;
        let exact = ExactOracle::new(table, target);
        let mut oracle: Box<dyn Oracle> = match noise {
            Some(n) if parse::<AlgoName>(algorithm)?.is_noisy() => {
                Box::new(NoisyOracle::new(exact, n.epsilon, noise_seed).map_err(err)?)
            }
            _ => Box::new(exact),
        };
        let out = drive(&mut session.inner, &mut oracle).map_err(err)?;
        let dict = PyDict::new(py);
        dict.set_item("target", target)?;
        dict.set_item("result", out.result)?;
        dict.set_item(
            "found",
            out.result == target || table.indistinguishable(out.result, target),
        )?;
        dict.set_item("queries", out.queries)?;
        dict.set_item("computational_cost", out.counters.computational())?;
        dict.set_item("counters", to_py(py, &out.counters)?)?;
        Ok(dict.into_any())
    }

    /// Expected queries and cost of one algorithm under the prior.
    #[pyo3(signature = (algorithm, epsilon = None, delta = None, trials = 200, seed = 0))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        algorithm: &str,
        epsilon: Option<f64>,
        delta: Option<f64>,
        trials: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let name: AlgoName = parse(algorithm)?;
        let noise = noise_params(epsilon, delta)?;
        let p = self.inner.clone();
        let report = py
            .detach(move || bench::evaluate(&p, name, noise, trials, seed))
            .map_err(err)?;
        to_py(py, &report)
    }
}

/// A search in progress; the caller plays the oracle.
#[pyclass(module = "pyranknet")]
struct Session {
    inner: ranknet::Session,
}

#[pymethods]
impl Session {
    /// The pending pair `(x, y)`, or `None` once finished.
    fn next(&self) -> Option<(usize, usize)> {
        match self.inner.next() {
            Step::Query { x, y } => Some((x, y)),
            Step::Done { .. } => None,
        }
    }

    /// Records an answer: `"first"`/`+1` if `x` is closer, `"second"`/`-1` otherwise.
    fn answer(&mut self, choice: &Bound<'_, PyAny>) -> PyResult<Option<(usize, usize)>> {
        let answer = if let Ok(s) = choice.extract::<String>() {
            match s.as_str() {
                "first" => Answer::Plus,
                "second" => Answer::Minus,
                _ => return Err(PyValueError::new_err(format!("unknown choice {s:?}"))),
            }
        } else {
            Answer::from_sign(choice.extract::<i64>()?).map_err(err)?
        };
        self.inner.answer(answer).map_err(err)?;
        Ok(self.next())
    }

    #[getter]
    fn finished(&self) -> bool {
        self.inner.is_finished()
    }

    #[getter]
    fn result(&self) -> Option<usize> {
        match self.inner.next() {
            Step::Done { result } => Some(result),
            Step::Query { .. } => None,
        }
    }

    #[getter]
    fn queries(&self) -> usize {
        self.inner.log().query_count()
    }

    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.state())
    }

    fn transcript(&self) -> String {
        self.inner.transcript()
    }
}

/// Runs an experiment from a JSON config and returns the report as JSON.
#[pyfunction]
fn run_bench(py: Python<'_>, config: &str) -> PyResult<String> {
    let config: ExperimentConfig = serde_json::from_str(config)
        .map_err(|e| RankNetError::new_err(format!("bad config: {e}")))?;
    py.detach(move || bench::run_bench(&config))
        .map(|r| r.to_json())
        .map_err(err)
}

#[pymodule]
fn pyranknet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RankNetError", m.py().get_type::<RankNetError>())?;
    m.add_class::<Dataset>()?;
    m.add_class::<RankTable>()?;
    m.add_class::<RankNetTree>()?;
    m.add_class::<Index>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(gen_l1_ball, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(make_prior, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
