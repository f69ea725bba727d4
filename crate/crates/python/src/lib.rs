//! Python bindings for the tree prior, tail bounds, k-d trees and the BART sampler.
//!
//! Structured results cross the boundary as plain dicts and lists decoded
//! from their JSON form.

use gwbart::bart::{self, BartConfig, LeafPrior};
use gwbart::branching::{self, ChernoffMode, OffspringLaw, RootConvention};
use gwbart::{kd, prior, stream_rng, survival, Design, Error, SplitSchedule};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Parameter(_) | Error::Parse { .. } | Error::Capacity { .. } | Error::EnumerationLimit { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn design_of(x: Vec<Vec<f64>>) -> PyResult<Design> {
    Design::from_rows(&x).map_err(py_err)
}

/// Depth-indexed split probabilities.
#[pyclass(name = "SplitSchedule", module = "gwbart_py", frozen)]
struct PySchedule {
    inner: SplitSchedule,
}

#[pymethods]
impl PySchedule {
    #[staticmethod]
    #[pyo3(signature = (alpha=0.95, gamma=2.0, max_depth=None))]
    fn polynomial(alpha: f64, gamma: f64, max_depth: Option<u32>) -> PyResult<Self> {
        Self::capped(SplitSchedule::polynomial(alpha, gamma), max_depth)
    }

    #[staticmethod]
    #[pyo3(signature = (alpha=0.25, xi=None, max_depth=None))]
    fn geometric(alpha: f64, xi: Option<f64>, max_depth: Option<u32>) -> PyResult<Self> {
        Self::capped(SplitSchedule::geometric_with_base(alpha, xi.unwrap_or(alpha)), max_depth)
    }

    #[staticmethod]
    #[pyo3(signature = (probs, max_depth=None))]
    fn table(probs: Vec<f64>, max_depth: Option<u32>) -> PyResult<Self> {
        Self::capped(SplitSchedule::table(probs), max_depth)
    }

    fn split_probability(&self, depth: u32) -> f64 {
        self.inner.split_probability(depth)
    }

    fn label(&self) -> String {
        self.inner.label()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("SplitSchedule({})", self.inner.label())
    }
}

impl PySchedule {
    fn capped(schedule: gwbart::Result<SplitSchedule>, max_depth: Option<u32>) -> PyResult<Self> {
        let s = schedule.map_err(py_err)?;
        Ok(Self { inner: match max_depth { Some(d) => s.with_max_depth(d), None => s } })
    }
}

/// Draws one tree from the prior on the design `x` (rows in `[0,1]^p`).
/// Returns the tree document and its metrics.
#[pyfunction]
#[pyo3(signature = (schedule, x, seed=0))]
fn sample_tree<'py>(py: Python<'py>, schedule: &PySchedule, x: Vec<Vec<f64>>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let design = design_of(x)?;
    let mut rng = stream_rng(seed, 0);
    let (tree, metrics) = prior::sample_tree(&schedule.inner, &design, &mut rng, prior::DEFAULT_MAX_NODES).map_err(py_err)?;
    let log_prior = prior::tree_log_prior(&tree, &schedule.inner, &design).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("tree", to_py(py, &tree)?)?;
    out.set_item("metrics", to_py(py, &metrics)?)?;
    out.set_item("log_prior", log_prior)?;
    Ok(out)
}

/// Empirical survival curves of total progeny and extinction time.
#[pyfunction]
#[pyo3(signature = (schedule, draws, kmax=50, tmax=10, seed=0))]
fn prior_survival<'py>(
    py: Python<'py>,
    schedule: &PySchedule,
    draws: u64,
    kmax: u64,
    tmax: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let sample = py
        .detach(|| survival::simulate_prior(&schedule.inner, draws, seed, prior::DEFAULT_MAX_NODES))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("progeny", (1..=kmax).map(|k| sample.progeny_survival(k).value).collect::<Vec<_>>())?;
    out.set_item("extinction", (1..=tmax).map(|t| sample.extinction_survival(t).value).collect::<Vec<_>>())?;
    out.set_item("generation_means", (0..=tmax as usize).map(|t| sample.generation_mean(t).value).collect::<Vec<_>>())?;
    out.set_item("truncated", sample.truncated)?;
    Ok(out)
}

/// Tail bound on total progeny; `c` is `"optimized"`, `"half-log"` or a positive number.
#[pyfunction]
#[pyo3(signature = (schedule, k, c="optimized"))]
fn chernoff_bound<'py>(py: Python<'py>, schedule: &PySchedule, k: u64, c: &str) -> PyResult<Bound<'py, PyAny>> {
    let mode = match c {
        "optimized" => ChernoffMode::Optimized,
        "half-log" => ChernoffMode::HalfLogK,
        other => ChernoffMode::Fixed(
            other.parse().map_err(|_| PyValueError::new_err(format!("unknown Chernoff parameter {other:?}")))?,
        ),
    };
    to_py(py, &branching::chernoff_progeny_bound(&schedule.inner, k, mode).map_err(py_err)?)
}

/// Bound on `P(T_ex > t)`; `convention` is `"direct"` or `"forced"`.
#[pyfunction]
#[pyo3(signature = (schedule, t, convention="direct"))]
fn extinction_bound(schedule: &PySchedule, t: usize, convention: &str) -> PyResult<f64> {
    let convention = match convention {
        "direct" => RootConvention::Direct,
        "forced" => RootConvention::Forced,
        other => return Err(PyValueError::new_err(format!("unknown convention {other:?}"))),
    };
    let law = OffspringLaw::from_schedule(&schedule.inner, t);
    Ok(branching::agresti_extinction_bound(&law, t, convention).map_err(py_err)?.value)
}

#[pyfunction]
fn markov_extinction_bound(schedule: &PySchedule, t: u32) -> f64 {
    branching::markov_extinction_bound(&schedule.inner, t)
}

#[pyfunction]
fn dwass_progeny_pmf(p: f64, k: u64) -> f64 {
    branching::dwass_progeny_pmf(p, k)
}

/// Checks the progeny bound against `exp(-k^a)` on `[k_min, k_max]`.
#[pyfunction]
#[pyo3(signature = (schedule, a, k_min=10_000, k_max=1_000_000))]
fn target_rate_check<'py>(py: Python<'py>, schedule: &PySchedule, a: f64, k_min: u64, k_max: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &branching::target_rate_check(&schedule.inner, a, k_min, k_max).map_err(py_err)?)
}

/// Median-split k-d tree on `x`, with its prior mass under a geometric schedule.
#[pyfunction]
#[pyo3(signature = (x, rounds, schedule=None))]
fn kd_tree<'py>(py: Python<'py>, x: Vec<Vec<f64>>, rounds: u32, schedule: Option<&PySchedule>) -> PyResult<Bound<'py, PyDict>> {
    let design = design_of(x)?;
    let tree = kd::build_kd_tree(&design, rounds).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("tree", to_py(py, &tree.to_document())?)?;
    out.set_item("occupancy", tree.occupancy(&design))?;
    out.set_item("balanced", tree.is_balanced(&design))?;
    if let Some(s) = schedule {
        out.set_item("prior_mass", to_py(py, &kd::kd_prior_mass(&tree, &s.inner, &design).map_err(py_err)?)?)?;
    }
    Ok(out)
}

/// Runs the BART sampler; returns the posterior mean, the per-sweep trace
/// and the final ensemble.
#[pyfunction]
#[pyo3(signature = (x, y, schedule, trees=20, sweeps=1000, burn_in=200, thin=1, noise_variance=1.0, leaf_variance=None, rescale=false, seed=0))]
#[allow(clippy::too_many_arguments)]
fn fit<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    schedule: &PySchedule,
    trees: usize,
    sweeps: usize,
    burn_in: usize,
    thin: usize,
    noise_variance: f64,
    leaf_variance: Option<f64>,
    rescale: bool,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let design = design_of(x)?;
    let mut config = BartConfig::new(trees, schedule.inner.clone());
    config.sweeps = sweeps;
    config.burn_in = burn_in;
    config.thin = thin;
    config.noise_variance = noise_variance;
    config.rescale_outputs = rescale;
    if let Some(v) = leaf_variance {
        config.leaf_prior = LeafPrior::Fixed(v);
    }
    let result = py
        .detach(|| bart::run_chain(&design, &y, &config, &mut stream_rng(seed, 0)))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("posterior_mean", result.posterior_mean.clone())?;
    out.set_item("trace", to_py(py, &result.trace.records)?)?;
    out.set_item("ensemble", to_py(py, &result.final_ensemble)?)?;
    out.set_item("scaling", to_py(py, &result.scaling)?)?;
    out.set_item("mean_max_leaves", result.mean_max_leaves())?;
    Ok(out)
}

/// Exact single-tree posterior over every tree on a small 1-D design.
/// Returns `(rules, probability)` pairs, rules in breadth-first order.
#[pyfunction]
#[pyo3(signature = (x, y, schedule, sigma2=1.0, tau2=1.0, limit=100_000))]
fn enumerate_posterior<'py>(
    py: Python<'py>,
    x: Vec<f64>,
    y: Vec<f64>,
    schedule: &PySchedule,
    sigma2: f64,
    tau2: f64,
    limit: usize,
) -> PyResult<Vec<(Bound<'py, PyAny>, f64)>> {
    let design = Design::from_column(&x).map_err(py_err)?;
    let table = bart::enumerate_posterior(&design, &y, &schedule.inner, sigma2, tau2, limit).map_err(py_err)?;
    table.entries.iter().map(|e| Ok((to_py(py, &e.tree.bfs_rules())?, e.probability))).collect()
}

/// Log marginal likelihood of the residuals in one leaf.
#[pyfunction]
fn leaf_marginal_loglik(residuals: Vec<f64>, sigma2: f64, tau2: f64) -> f64 {
    bart::leaf_marginal_loglik(&residuals, sigma2, tau2)
}

/// Reads a `x1..xp,y` CSV file into `(rows, y)`.
#[pyfunction]
fn load_dataset(path: &str) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let (design, y) = gwbart::data::load_dataset(path).map_err(py_err)?;
    Ok(((0..design.n()).map(|i| design.row(i).to_vec()).collect(), y))
}

#[pymodule]
fn gwbart_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedule>()?;
    m.add_function(wrap_pyfunction!(sample_tree, m)?)?;
    m.add_function(wrap_pyfunction!(prior_survival, m)?)?;
    m.add_function(wrap_pyfunction!(chernoff_bound, m)?)?;
    m.add_function(wrap_pyfunction!(extinction_bound, m)?)?;
    m.add_function(wrap_pyfunction!(markov_extinction_bound, m)?)?;
    m.add_function(wrap_pyfunction!(dwass_progeny_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(target_rate_check, m)?)?;
    m.add_function(wrap_pyfunction!(kd_tree, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(leaf_marginal_loglik, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    Ok(())
}
