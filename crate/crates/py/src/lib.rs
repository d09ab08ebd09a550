//! Python bindings: configuration, the simulator with baseline controllers,
//! and the train/eval/baseline/sweep entry points.

use std::path::PathBuf;
use std::sync::Arc;

use ::lifenet::baselines::{bp_step, umw_step, VirtualQueues};
use ::lifenet::harness::{self as h, HarnessError};
use ::lifenet::{Env, ExperimentConfig, Network, PolicyKind};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_policy(name: &str) -> PyResult<PolicyKind> {
    name.parse().map_err(|e: String| PyValueError::new_err(e))
}

/// Experiment configuration. Mirrors the TOML file format.
#[pyclass(name = "Config", module = "lifenet", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// The built-in two-commodity edge network.
    #[staticmethod]
    fn edge() -> Self {
        Self { inner: ExperimentConfig::edge() }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ExperimentConfig::load(&path).map(|inner| Self { inner }).map_err(|e| to_py(e.into()))
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ExperimentConfig::from_toml(text).map(|inner| Self { inner }).map_err(|e| to_py(e.into()))
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    /// SHA-256 of the canonical TOML.
    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(|e| to_py(e.into()))
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn policy(&self) -> String {
        self.inner.policy.to_string()
    }

    #[setter]
    fn set_policy(&mut self, name: &str) -> PyResult<()> {
        self.inner.policy = parse_policy(name)?;
        Ok(())
    }

    /// (length, train, improve, test, per_iteration)
    #[getter]
    fn episodes(&self) -> (i64, i64, i64, i64, i64) {
        let e = &self.inner.episodes;
        (e.length, e.train, e.improve, e.test, e.per_iteration)
    }

    #[setter]
    fn set_episodes(&mut self, e: (i64, i64, i64, i64, i64)) {
        let ep = &mut self.inner.episodes;
        (ep.length, ep.train, ep.improve, ep.test, ep.per_iteration) = e;
    }

    /// Copy with every commodity's mean arrival rate set to `rate`.
    fn with_rate(&self, rate: f64) -> Self {
        Self { inner: self.inner.clone().with_rate(rate) }
    }

    /// Copy with the long train/improve/test schedule.
    fn paper_scale(&self) -> Self {
        Self { inner: self.inner.clone().paper_scale() }
    }

    fn network(&self) -> PyResult<PyNetwork> {
        self.inner
            .network()
            .map(|n| PyNetwork { inner: Arc::new(n) })
            .map_err(|e| to_py(e.into()))
    }

    fn __repr__(&self) -> String {
        format!("Config(seed={}, policy={}, hash={})", self.inner.seed, self.inner.policy, &self.inner.hash()[..12])
    }
}

/// Topology, commodities and enumerated paths.
#[pyclass(name = "Network", module = "lifenet", frozen, from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    inner: Arc<Network>,
}

#[pymethods]
impl PyNetwork {
    #[getter]
    fn nodes(&self) -> Vec<String> {
        self.inner.graph.nodes().to_vec()
    }

    /// (from, to, block_capacity, max_blocks, block_cost) per link.
    #[getter]
    fn links(&self) -> Vec<(String, String, u32, u32, f64)> {
        self.inner
            .graph
            .links()
            .iter()
            .map(|l| (l.from.clone(), l.to.clone(), l.block_capacity, l.max_blocks, l.block_cost))
            .collect()
    }

    /// Paths as node-name lists, indexed by path id.
    #[getter]
    fn paths(&self) -> Vec<Vec<String>> {
        let g = &self.inner.graph;
        self.inner
            .paths
            .all()
            .iter()
            .map(|p| p.nodes.iter().map(|&n| g.node_name(n).to_string()).collect())
            .collect()
    }

    fn commodity_paths(&self, commodity: usize) -> PyResult<Vec<usize>> {
        if commodity >= self.inner.num_commodities() {
            return Err(PyValueError::new_err(format!("no commodity {commodity}")));
        }
        Ok(self.inner.paths.of_commodity(commodity).to_vec())
    }

    fn local_paths(&self, node: usize) -> PyResult<Vec<usize>> {
        if node >= self.inner.num_nodes() {
            return Err(PyValueError::new_err(format!("no node {node}")));
        }
        Ok(self.inner.local_paths(node))
    }

    #[getter]
    fn num_commodities(&self) -> usize {
        self.inner.num_commodities()
    }

    #[getter]
    fn max_lifetime(&self) -> u32 {
        self.inner.max_lifetime()
    }

    /// Cost of running every link at full allocation for one slot.
    #[getter]
    fn max_slot_cost(&self) -> f64 {
        self.inner.max_slot_cost()
    }
}

/// One slot's outcome.
#[pyclass(name = "Step", module = "lifenet", frozen, get_all)]
struct PyStep {
    delivered: Vec<u32>,
    expired: Vec<u32>,
    dropped: Vec<u32>,
    arrivals: Vec<u32>,
    cost: f64,
    cost_normalized: f64,
    throughput: Vec<f64>,
    backlog: u64,
}

/// The slotted simulator driven by a baseline controller.
#[pyclass(name = "Env", module = "lifenet")]
struct PyEnv {
    env: Env,
    policy: PolicyKind,
    vq: VirtualQueues,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (network, seed, policy = "bp"))]
    fn new(network: PyNetwork, seed: u64, policy: &str) -> PyResult<Self> {
        let policy = parse_policy(policy)?;
        if policy == PolicyKind::Cdrl {
            return Err(PyValueError::new_err("Env drives bp or umw; use train/evaluate for cdrl"));
        }
        let vq = VirtualQueues::new(&network.inner);
        Ok(Self { env: Env::new(network.inner, seed), policy, vq })
    }

    /// Empty the queues and restart the arrival stream.
    fn reset(&mut self, seed: u64) {
        self.env.reset(seed);
        self.vq = VirtualQueues::new(self.env.network());
    }

    /// Slots elapsed since the last reset.
    #[getter]
    fn t(&self) -> u64 {
        self.env.state().t
    }

    #[getter]
    fn backlog(&self) -> u64 {
        self.env.state().total()
    }

    /// Queue length at (node, path, lifetime).
    fn queue(&self, node: usize, path: usize, lifetime: u32) -> PyResult<u32> {
        let net = self.env.network();
        if node >= net.num_nodes() || path >= net.num_paths() || lifetime == 0 || lifetime > net.max_lifetime() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.env.state().get(node, path, lifetime))
    }

    /// Flat copy of the queue tensor in (node, path, lifetime) order.
    fn state(&self) -> Vec<u32> {
        self.env.state().as_slice().to_vec()
    }

    /// Sample arrivals, let the controller act, and advance one slot.
    fn step(&mut self) -> PyResult<PyStep> {
        let net = self.env.network().clone();
        let arrivals = self.env.sample_arrivals();
        let q = self.env.state();
        let action = match self.policy {
            PolicyKind::Umw => umw_step(&net, q, &arrivals, &mut self.vq),
            _ => bp_step(&net, q, &arrivals),
        };
        let out = self.env.step(&action, &arrivals).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyStep {
            backlog: out.next.total(),
            delivered: out.delivered,
            expired: out.expired,
            dropped: out.dropped,
            arrivals: arrivals.counts,
            cost: out.cost.raw,
            cost_normalized: out.cost.normalized,
            throughput: out.throughput,
        })
    }
}

/// Test-phase performance of one policy.
#[pyclass(name = "Summary", module = "lifenet", frozen, get_all)]
struct PySummary {
    policy: String,
    seed: u64,
    episodes: usize,
    rates: Vec<f64>,
    deltas: Vec<f64>,
    cost_per_episode: f64,
    reliability: Vec<f64>,
    delivered: Vec<u64>,
    arrivals: Vec<u64>,
}

#[pymethods]
impl PySummary {
    #[pyo3(signature = (slack = 0.0))]
    fn meets_targets(&self, slack: f64) -> bool {
        self.reliability.iter().zip(&self.deltas).all(|(r, d)| *r >= d - slack)
    }

    fn __repr__(&self) -> String {
        format!(
            "Summary(policy={}, seed={}, cost_per_episode={:.3}, reliability={:?})",
            self.policy, self.seed, self.cost_per_episode, self.reliability
        )
    }
}

impl From<h::Summary> for PySummary {
    fn from(s: h::Summary) -> Self {
        Self {
            policy: s.policy,
            seed: s.seed,
            episodes: s.episodes,
            rates: s.rates,
            deltas: s.deltas,
            cost_per_episode: s.cost_per_episode,
            reliability: s.reliability,
            delivered: s.delivered,
            arrivals: s.arrivals,
        }
    }
}

/// Train the learned controller and test the selected checkpoint.
/// Returns (summary, checkpoint directory, checkpoint kind, final multipliers).
#[pyfunction]
fn train(py: Python<'_>, config: PyConfig, out: PathBuf) -> PyResult<(PySummary, PathBuf, String, Vec<f64>)> {
    let report = py.detach(|| h::run_training(&config.inner, &out)).map_err(to_py)?;
    let kind = format!("{:?}", report.checkpoint.kind).to_lowercase();
    Ok((report.summary.into(), report.checkpoint_dir, kind, report.final_lambda))
}

/// Test a saved controller.
#[pyfunction]
#[pyo3(signature = (config, checkpoint, out = None))]
fn evaluate(py: Python<'_>, config: PyConfig, checkpoint: PathBuf, out: Option<PathBuf>) -> PyResult<PySummary> {
    py.detach(|| h::run_eval(&config.inner, &checkpoint, out.as_deref())).map(Into::into).map_err(to_py)
}

/// Test a baseline policy ("bp" or "umw").
#[pyfunction]
#[pyo3(signature = (config, policy, out = None))]
fn baseline(py: Python<'_>, config: PyConfig, policy: &str, out: Option<PathBuf>) -> PyResult<PySummary> {
    let policy = parse_policy(policy)?;
    py.detach(|| h::run_baseline(&config.inner, policy, out.as_deref())).map(Into::into).map_err(to_py)
}

/// Run each policy at each arrival rate, writing under `out`.
#[pyfunction]
fn sweep(py: Python<'_>, config: PyConfig, rates: Vec<f64>, policies: Vec<String>, out: PathBuf) -> PyResult<Vec<PySummary>> {
    let policies = policies.iter().map(|p| parse_policy(p)).collect::<PyResult<Vec<_>>>()?;
    let rows = py.detach(|| h::run_sweep(&config.inner, &rates, &policies, &out)).map_err(to_py)?;
    Ok(rows.into_iter().map(Into::into).collect())
}

#[pymodule(name = "lifenet")]
fn lifenet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyStep>()?;
    m.add_class::<PySummary>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
