//! Python bindings for the simulator: scenario configs, Monte Carlo runs,
//! metric tables, both grouping solvers, and the pilot allocator, each with
//! its exhaustive oracle for small instances.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use beamcover::grouping::{
    brute_force_grouping_oracle, group_power_agnostic, group_power_aware, GroupingInstance,
    GroupingMode, UserSignature,
};
use beamcover::harness::{
    parse_config, parse_config_text, run_experiment, summarize, ExperimentKind, MetricsTable,
    ScenarioConfig, Scheme,
};
use beamcover::pilot_graph::{
    brute_force_cut_oracle, max_tau_cut_assign, random_assign, InterferenceGraph,
};
use beamcover::rng::stream;

fn err(e: beamcover::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scheme_of(name: &str) -> PyResult<Scheme> {
    name.parse().map_err(err)
}

/// A parsed scenario: every config key with defaults applied.
#[pyclass(name = "Config")]
#[derive(Clone)]
struct PyConfig {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyConfig {
    /// Parse config text (`key = value` lines, `#` comments).
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: parse_config_text(text).map_err(err)? })
    }

    /// Parse a config file.
    #[staticmethod]
    fn parse_file(path: &str) -> PyResult<Self> {
        Ok(Self { inner: parse_config(path).map_err(err)? })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.n_cells
    }

    #[getter]
    fn tau(&self) -> usize {
        self.inner.tau
    }

    #[getter]
    fn caps(&self) -> Vec<Vec<usize>> {
        self.inner.caps.clone()
    }

    #[getter]
    fn snr_db(&self) -> Vec<f64> {
        self.inner.snr_db.clone()
    }

    #[getter]
    fn schemes(&self) -> Vec<String> {
        self.inner.schemes.iter().map(|s| s.name().to_string()).collect()
    }

    #[getter]
    fn allocation(&self) -> String {
        self.inner.allocation.name().to_string()
    }

    #[getter]
    fn trials(&self) -> usize {
        self.inner.trials
    }

    #[setter]
    fn set_trials(&mut self, trials: usize) {
        self.inner.trials = trials;
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
    fn threads(&self) -> usize {
        self.inner.threads
    }

    #[setter]
    fn set_threads(&mut self, threads: usize) {
        self.inner.threads = threads;
    }

    /// Run the Monte Carlo experiment this config describes.
    fn run(&self, py: Python<'_>) -> PyResult<PyMetrics> {
        let cfg = self.inner.clone();
        let table = py.allow_threads(move || {
            cfg.validate()?;
            run_experiment(&cfg)
        });
        Ok(PyMetrics { inner: table.map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(M={}, K={}, N_c={}, tau={}, snr_db={:?}, trials={}, seed={})",
            self.inner.m,
            self.inner.k,
            self.inner.n_cells,
            self.inner.tau,
            self.inner.snr_db,
            self.inner.trials,
            self.inner.seed
        )
    }
}

/// Per-(scheme, SNR, trial, user) metric rows with aggregation helpers.
#[pyclass(name = "Metrics")]
struct PyMetrics {
    inner: MetricsTable,
}

#[pymethods]
impl PyMetrics {
    /// Rebuild a table from CSV text.
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self { inner: MetricsTable::from_csv(text).map_err(err)? })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    /// Mean estimation error for one scheme at one SNR (None if absent).
    fn mean_mse(&self, scheme: &str, snr_db: f64) -> PyResult<Option<f64>> {
        Ok(self.inner.mean_mse(scheme_of(scheme)?, snr_db))
    }

    /// Mean network sum spectral efficiency (bit/s/Hz).
    fn mean_network_se(&self, scheme: &str, snr_db: f64) -> PyResult<Option<f64>> {
        Ok(self.inner.mean_network_se(scheme_of(scheme)?, snr_db))
    }

    /// Quantile of the per-trial network spectral efficiency.
    #[pyo3(signature = (scheme, snr_db, q = 0.05))]
    fn outage_network_se(&self, scheme: &str, snr_db: f64, q: f64) -> PyResult<Option<f64>> {
        Ok(self.inner.outage_network_se(scheme_of(scheme)?, snr_db, q))
    }

    /// Network sum spectral efficiency of every trial, in trial order.
    fn network_se_by_trial(&self, scheme: &str, snr_db: f64) -> PyResult<Vec<f64>> {
        Ok(self.inner.network_se_by_trial(scheme_of(scheme)?, snr_db))
    }

    /// Text summary: kind is "mse", "se", or "cdf".
    #[pyo3(signature = (kind = "se"))]
    fn summary(&self, kind: &str) -> PyResult<String> {
        let kind: ExperimentKind = kind.parse().map_err(err)?;
        Ok(summarize(&self.inner, kind))
    }

    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }
}

fn instance_from(n_beams: usize, users: Vec<(Vec<usize>, Vec<f64>)>) -> PyResult<GroupingInstance> {
    let users = users
        .into_iter()
        .enumerate()
        .map(|(user, (beams, beam_power))| UserSignature { user, beams, beam_power })
        .collect();
    GroupingInstance::new(n_beams, users).map_err(err)
}

fn groups_to_py(py: Python<'_>, groupings: &[beamcover::grouping::CellGrouping]) -> PyResult<Vec<Py<PyDict>>> {
    let mut out = Vec::new();
    for grouping in groupings {
        for g in &grouping.groups {
            let d = PyDict::new_bound(py);
            d.set_item("slot", g.slot)?;
            d.set_item("members", g.members.clone())?;
            d.set_item("covered_beams", g.covered_beams.clone())?;
            d.set_item("value", g.value)?;
            out.push(d.into());
        }
    }
    Ok(out)
}

/// Power-agnostic grouping of one cell: each slot greedily maximizes the
/// count of newly covered beams. `users` is a list of (beams, powers).
#[pyfunction]
fn group_agnostic(
    py: Python<'_>,
    n_beams: usize,
    users: Vec<(Vec<usize>, Vec<f64>)>,
    caps: Vec<usize>,
) -> PyResult<Vec<Py<PyDict>>> {
    let inst = instance_from(n_beams, users)?;
    let groupings = group_power_agnostic(&[inst], &[caps]).map_err(err)?;
    groups_to_py(py, &groupings)
}

/// Power-aware grouping of one cell: each slot greedily maximizes captured
/// power under a per-beam best-owner rule.
#[pyfunction]
fn group_aware(
    py: Python<'_>,
    n_beams: usize,
    users: Vec<(Vec<usize>, Vec<f64>)>,
    caps: Vec<usize>,
) -> PyResult<Vec<Py<PyDict>>> {
    let inst = instance_from(n_beams, users)?;
    let groupings = group_power_aware(&[inst], &[caps]).map_err(err)?;
    groups_to_py(py, &groupings)
}

/// Exhaustive slot-sum optimum; `mode` is "coverage" or "captured_power".
#[pyfunction]
fn grouping_oracle(
    n_beams: usize,
    users: Vec<(Vec<usize>, Vec<f64>)>,
    caps: Vec<usize>,
    mode: &str,
) -> PyResult<f64> {
    let mode = match mode {
        "coverage" => GroupingMode::Coverage,
        "captured_power" => GroupingMode::CapturedPower,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown mode '{other}' (expected coverage or captured_power)"
            )))
        }
    };
    let inst = instance_from(n_beams, users)?;
    brute_force_grouping_oracle(&inst, &caps, mode).map_err(err)
}

fn graph_from(cells: Vec<usize>, edges: Vec<(usize, usize, f64)>) -> PyResult<InterferenceGraph> {
    InterferenceGraph::from_weights(&cells, &edges).map_err(err)
}

/// Greedy maximum-τ-cut pilot assignment over a group interference graph.
/// `cells[i]` is node i's cell; `edges` lists cross-cell weights. Returns
/// (pilots per cell in slot order, achieved cut value).
#[pyfunction]
#[pyo3(signature = (cells, edges, tau, seed = 1))]
fn max_cut_assign(
    cells: Vec<usize>,
    edges: Vec<(usize, usize, f64)>,
    tau: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<usize>>, f64)> {
    let graph = graph_from(cells, edges)?;
    let assignment = max_tau_cut_assign(&graph, tau, &mut stream(seed, &[3])).map_err(err)?;
    let cut = assignment.cut_value.unwrap_or(0.0);
    Ok((assignment.pilots, cut))
}

/// Independent random pilot permutation per cell (the null arm).
#[pyfunction]
#[pyo3(signature = (n_cells, tau, seed = 1))]
fn random_cut_assign(n_cells: usize, tau: usize, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    Ok(random_assign(n_cells, tau, &mut stream(seed, &[3])).map_err(err)?.pilots)
}

/// Exhaustive maximum cut over all feasible pilot assignments.
#[pyfunction]
fn cut_oracle(cells: Vec<usize>, edges: Vec<(usize, usize, f64)>, tau: usize) -> PyResult<f64> {
    let graph = graph_from(cells, edges)?;
    brute_force_cut_oracle(&graph, tau).map_err(err)
}

/// Squared projector distance between two beam index sets: |A∖B| + |B∖A|.
#[pyfunction]
fn chordal_distance(a: Vec<usize>, b: Vec<usize>) -> f64 {
    beamcover::math::chordal_distance(&a, &b)
}

/// Interfering-beam count between two beam index sets: |A ∩ B|.
#[pyfunction]
fn beam_overlap(a: Vec<usize>, b: Vec<usize>) -> f64 {
    beamcover::math::beam_overlap(&a, &b)
}

#[pymodule]
fn beamcover_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyMetrics>()?;
    m.add_function(wrap_pyfunction!(group_agnostic, m)?)?;
    m.add_function(wrap_pyfunction!(group_aware, m)?)?;
    m.add_function(wrap_pyfunction!(grouping_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(max_cut_assign, m)?)?;
    m.add_function(wrap_pyfunction!(random_cut_assign, m)?)?;
    m.add_function(wrap_pyfunction!(cut_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(chordal_distance, m)?)?;
    m.add_function(wrap_pyfunction!(beam_overlap, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
