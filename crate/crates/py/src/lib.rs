//! Python bindings: datasets, partitions, ridge statistics, classifiers,
//! random features, the federated drivers, the coverage simulator and the
//! cost calculator.

use std::path::PathBuf;

use fed3r_core::baselines as lp;
use fed3r_core::cost::{self, Algorithm, CostParams};
use fed3r_core::federation::{self, FederationConfig, SamplingMode, TrainingTrace};
use fed3r_core::{self as core, DenseMatrix};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

fn py_err(e: core::Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn matrix(rows: Vec<Vec<f64>>, cols_if_empty: usize) -> PyResult<DenseMatrix> {
    if rows.is_empty() {
        return Ok(DenseMatrix::zeros(0, cols_if_empty));
    }
    DenseMatrix::from_rows(&rows).map_err(py_err)
}

#[pyclass(name = "FeatureDataset", module = "fed3r", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFeatureDataset {
    inner: core::FeatureDataset,
}

#[pymethods]
impl PyFeatureDataset {
    #[new]
    fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> PyResult<Self> {
        let dim = features.first().map_or(0, Vec::len);
        let inner =
            core::FeatureDataset::new(matrix(features, dim)?, labels, classes).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core::read_features(&path).map_err(py_err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        core::write_features(&path, &self.inner).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.classes()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        self.inner.features().to_rows()
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    fn class_counts(&self) -> Vec<usize> {
        self.inner.class_counts()
    }

    /// Returns `(train, test)`.
    fn split(&self, test_fraction: f64, seed: u64) -> PyResult<(Self, Self)> {
        let (a, b) = self.inner.split(test_fraction, seed).map_err(py_err)?;
        Ok((Self { inner: a }, Self { inner: b }))
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureDataset(n={}, dim={}, classes={})",
            self.inner.len(),
            self.inner.dim(),
            self.inner.classes()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (classes, dim, per_class, separation=3.0, anisotropy=1.0, seed=0))]
fn gen_gaussian_mixture(
    classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    anisotropy: f64,
    seed: u64,
) -> PyResult<PyFeatureDataset> {
    let inner = core::gen_gaussian_mixture(&core::MixtureSpec {
        classes,
        dim,
        per_class,
        separation,
        anisotropy,
        seed,
    })
    .map_err(py_err)?;
    Ok(PyFeatureDataset { inner })
}

#[pyclass(
    name = "PartitionManifest",
    module = "fed3r",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyManifest {
    inner: core::PartitionManifest,
}

#[pymethods]
impl PyManifest {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core::read_manifest(&path).map_err(py_err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        core::write_manifest(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn num_clients(&self) -> usize {
        self.inner.num_clients()
    }

    #[getter]
    fn scheme(&self) -> String {
        self.inner.scheme.clone()
    }

    fn client(&self, k: usize) -> PyResult<Vec<usize>> {
        if k >= self.inner.num_clients() {
            return Err(PyValueError::new_err(format!("no client {k}")));
        }
        Ok(self.inner.client(k).to_vec())
    }

    fn client_sizes(&self) -> Vec<usize> {
        self.inner.client_sizes()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }
}

/// `alpha = 0` gives one class per client.
#[pyfunction]
#[pyo3(signature = (ds, clients, alpha, seed=0))]
fn partition(ds: &PyFeatureDataset, clients: usize, alpha: f64, seed: u64) -> PyResult<PyManifest> {
    let inner = if alpha == 0.0 {
        let per_class = (clients / ds.inner.classes()).max(1);
        core::partition::partition_single_class_split(&ds.inner, per_class, seed)
    } else {
        core::partition_dirichlet(&ds.inner, clients, alpha, seed)
    }
    .map_err(py_err)?;
    Ok(PyManifest { inner })
}

#[pyclass(name = "RRStatistics", module = "fed3r", skip_from_py_object)]
#[derive(Clone)]
struct PyStats {
    inner: core::RRStatistics,
}

#[pymethods]
impl PyStats {
    #[new]
    fn new(dim: usize, classes: usize) -> Self {
        Self {
            inner: core::RRStatistics::zeros(dim, classes),
        }
    }

    /// Statistics of one shard.
    #[staticmethod]
    fn compute(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> PyResult<Self> {
        let dim = features.first().map_or(0, Vec::len);
        let inner =
            core::compute_local_stats(&matrix(features, dim)?, &labels, classes).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn merge(&mut self, other: &PyStats) -> PyResult<()> {
        self.inner.merge_from(&other.inner).map_err(py_err)
    }

    fn __add__(&self, other: &PyStats) -> PyResult<Self> {
        Ok(Self {
            inner: core::merge_stats(&self.inner, &other.inner).map_err(py_err)?,
        })
    }

    #[getter]
    fn count(&self) -> u64 {
        self.inner.count()
    }

    fn a(&self) -> Vec<Vec<f64>> {
        self.inner.a().to_rows()
    }

    fn b(&self) -> Vec<Vec<f64>> {
        self.inner.b().to_rows()
    }

    /// Solves and unit-normalises the class columns.
    #[pyo3(signature = (lambda_=core::DEFAULT_LAMBDA, normalize=true))]
    fn solve(&self, lambda_: f64, normalize: bool) -> PyResult<PyClassifier> {
        let c = core::solve_classifier(&self.inner, lambda_).map_err(py_err)?;
        Ok(PyClassifier {
            inner: if normalize { c.normalize_columns() } else { c },
        })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: core::RRStatistics::from_bytes(data).map_err(py_err)?,
        })
    }
}

#[pyclass(name = "Classifier", module = "fed3r", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyClassifier {
    inner: core::Classifier,
}

#[pymethods]
impl PyClassifier {
    #[new]
    fn new(weights: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: core::Classifier::new(matrix(weights, 0)?),
        })
    }

    fn weights(&self) -> Vec<Vec<f64>> {
        self.inner.weights().to_rows()
    }

    #[getter]
    fn temperature(&self) -> f64 {
        self.inner.temperature()
    }

    #[getter]
    fn zero_columns(&self) -> Vec<usize> {
        self.inner.zero_columns().to_vec()
    }

    fn normalized(&self) -> Self {
        Self {
            inner: self.inner.clone().normalize_columns(),
        }
    }

    fn predict(&self, z: Vec<f64>) -> PyResult<usize> {
        self.inner.predict(&z).map_err(py_err)
    }

    fn scores(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.scores(&z).map_err(py_err)
    }

    fn accuracy(&self, ds: &PyFeatureDataset) -> PyResult<f64> {
        self.inner.evaluate_accuracy(&ds.inner).map_err(py_err)
    }
}

#[pyfunction]
#[pyo3(signature = (features, labels, classes, lambda_=core::DEFAULT_LAMBDA))]
fn centralized_rr(
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: usize,
    lambda_: f64,
) -> PyResult<PyClassifier> {
    let dim = features.first().map_or(0, Vec::len);
    let inner =
        core::centralized_rr(&matrix(features, dim)?, &labels, classes, lambda_).map_err(py_err)?;
    Ok(PyClassifier { inner })
}

#[pyclass(name = "RffMap", module = "fed3r", frozen, skip_from_py_object)]
struct PyRffMap {
    inner: core::RffMap,
}

#[pymethods]
impl PyRffMap {
    #[new]
    fn new(input_dim: usize, output_dim: usize, sigma: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: core::sample_rff(input_dim, output_dim, sigma, seed).map_err(py_err)?,
        })
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn map_vector(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.map_vector(&z).map_err(py_err)
    }

    fn apply(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let m = matrix(rows, self.inner.input_dim())?;
        Ok(self.inner.apply(&m).map_err(py_err)?.to_rows())
    }
}

#[pyfunction]
fn kernel_exact(z: Vec<f64>, zeta: Vec<f64>, sigma: f64) -> PyResult<f64> {
    core::rff::kernel_exact(&z, &zeta, sigma).map_err(py_err)
}

fn trace_dict<'py>(py: Python<'py>, trace: &TrainingTrace) -> PyResult<Bound<'py, PyDict>> {
    let records = PyList::empty(py);
    for r in &trace.records {
        let d = PyDict::new(py);
        d.set_item("round", r.round)?;
        d.set_item("sampled", r.sampled.clone())?;
        d.set_item("new_clients", r.new_clients.clone())?;
        d.set_item("distinct_clients", r.distinct_clients)?;
        d.set_item("accuracy", r.accuracy)?;
        d.set_item("comm_down_bytes", r.cost.down_bytes)?;
        d.set_item("comm_up_bytes", r.cost.up_bytes)?;
        d.set_item("avg_client_flops", r.cost.avg_client_flops)?;
        records.append(d)?;
    }
    let out = PyDict::new(py);
    out.set_item("algorithm", trace.algorithm.name())?;
    out.set_item("records", records)?;
    out.set_item("metrics_csv", trace.to_csv())?;
    out.set_item("final_accuracy", trace.final_accuracy())?;
    Ok(out)
}

fn parse_sampling(s: &str) -> PyResult<SamplingMode> {
    match s {
        "without_replacement" => Ok(SamplingMode::WithoutReplacement),
        "with_replacement" => Ok(SamplingMode::WithReplacement),
        other => Err(PyValueError::new_err(format!(
            "unknown sampling mode '{other}'"
        ))),
    }
}

/// Returns `(classifier, trace)`; the trace is a dict with per-round records
/// and the metrics CSV text.
#[pyfunction]
#[pyo3(signature = (
    ds, manifest, clients_per_round, seed=0, lambda_=core::DEFAULT_LAMBDA,
    sampling="without_replacement", rounds_max=None, eval_every=1,
    rff_dim=None, rff_sigma=1000.0, rff_seed=0, eval_ds=None
))]
#[allow(clippy::too_many_arguments)]
fn run_fed3r<'py>(
    py: Python<'py>,
    ds: &PyFeatureDataset,
    manifest: &PyManifest,
    clients_per_round: usize,
    seed: u64,
    lambda_: f64,
    sampling: &str,
    rounds_max: Option<usize>,
    eval_every: usize,
    rff_dim: Option<usize>,
    rff_sigma: f64,
    rff_seed: u64,
    eval_ds: Option<&PyFeatureDataset>,
) -> PyResult<(PyClassifier, Bound<'py, PyDict>)> {
    let cfg = FederationConfig {
        sampling: parse_sampling(sampling)?,
        rounds_max,
        lambda: lambda_,
        eval_every,
        rff: rff_dim.map(|dim| core::RffConfig {
            dim,
            sigma: rff_sigma,
            seed: rff_seed,
        }),
        ..FederationConfig::new(manifest.inner.num_clients(), clients_per_round, seed)
    };
    let run = py
        .detach(|| {
            federation::run_fed3r(&ds.inner, &manifest.inner, &cfg, eval_ds.map(|e| &e.inner))
        })
        .map_err(py_err)?;
    Ok((
        PyClassifier {
            inner: run.classifier,
        },
        trace_dict(py, &run.trace)?,
    ))
}

/// Federated linear probing; `init` is a Classifier for a ridge warm start.
#[pyfunction]
#[pyo3(signature = (
    ds, manifest, clients_per_round, rounds, seed=0, lr=0.1, weight_decay=4e-5,
    batch_size=50, local_epochs=5, server_lr=1.0, server_momentum=0.0,
    temperature=1.0, init=None, eval_ds=None
))]
#[allow(clippy::too_many_arguments)]
fn run_lp<'py>(
    py: Python<'py>,
    ds: &PyFeatureDataset,
    manifest: &PyManifest,
    clients_per_round: usize,
    rounds: usize,
    seed: u64,
    lr: f64,
    weight_decay: f64,
    batch_size: usize,
    local_epochs: usize,
    server_lr: f64,
    server_momentum: f64,
    temperature: f64,
    init: Option<&PyClassifier>,
    eval_ds: Option<&PyFeatureDataset>,
) -> PyResult<(PyClassifier, Bound<'py, PyDict>)> {
    let fed = FederationConfig::new(manifest.inner.num_clients(), clients_per_round, seed);
    let cfg = lp::LpConfig {
        lr,
        weight_decay,
        batch_size,
        local_epochs,
        server_lr,
        server_momentum,
        rounds,
        temperature,
    };
    let start = match init {
        Some(c) => lp::LpInit::From(c.inner.clone()),
        None => lp::LpInit::Random,
    };
    let run = py
        .detach(|| {
            lp::run_lp(
                &ds.inner,
                &manifest.inner,
                &fed,
                &cfg,
                start,
                eval_ds.map(|e| &e.inner),
            )
        })
        .map_err(py_err)?;
    Ok((
        PyClassifier {
            inner: run.classifier,
        },
        trace_dict(py, &run.trace)?,
    ))
}

#[pyfunction]
fn fedncm_fit(ds: &PyFeatureDataset, manifest: &PyManifest) -> PyResult<PyClassifier> {
    Ok(PyClassifier {
        inner: core::fedncm_fit(&ds.inner, &manifest.inner).map_err(py_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (weights, ds, grid=lp::DEFAULT_TEMPERATURE_GRID.to_vec()))]
fn calibrate_temperature(
    weights: Vec<Vec<f64>>,
    ds: &PyFeatureDataset,
    grid: Vec<f64>,
) -> PyResult<f64> {
    lp::calibrate_temperature(&matrix(weights, 0)?, &ds.inner, &grid).map_err(py_err)
}

/// Mean and standard deviation of rounds to reach each coverage fraction.
#[pyfunction]
#[pyo3(signature = (clients, per_round, trials=1000, seed=0, fractions=core::coupon::DEFAULT_FRACTIONS.to_vec()))]
fn coupon_rounds<'py>(
    py: Python<'py>,
    clients: usize,
    per_round: usize,
    trials: usize,
    seed: u64,
    fractions: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = py
        .detach(|| core::coupon_rounds(clients, per_round, &fractions, trials, seed))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("fractions", r.fractions.clone())?;
    out.set_item("mean_rounds", r.mean_rounds.clone())?;
    out.set_item("std_rounds", r.std_rounds.clone())?;
    out.set_item("csv", r.to_csv())?;
    Ok(out)
}

/// `(download, upload)` values per client per round.
#[pyfunction]
#[pyo3(signature = (algorithm, dim, classes, rff_dim=None))]
fn comm_per_client(
    algorithm: &str,
    dim: u64,
    classes: u64,
    rff_dim: Option<u64>,
) -> PyResult<(u64, u64)> {
    let alg: Algorithm = algorithm.parse().map_err(py_err)?;
    let mut p = CostParams::new(dim, classes);
    p.rff_dim = rff_dim;
    cost::comm_per_client(alg, &p).map_err(py_err)
}

/// Client FLOPs for one round on `n_k` samples.
#[pyfunction]
#[pyo3(signature = (algorithm, dim, classes, n_k, rff_dim=None, local_epochs=5))]
fn compute_per_round(
    algorithm: &str,
    dim: u64,
    classes: u64,
    n_k: u64,
    rff_dim: Option<u64>,
    local_epochs: u64,
) -> PyResult<f64> {
    let alg: Algorithm = algorithm.parse().map_err(py_err)?;
    let mut p = CostParams::new(dim, classes);
    p.rff_dim = rff_dim;
    p.local_epochs = local_epochs;
    cost::compute_per_round_per_client(alg, &p, n_k).map_err(py_err)
}

#[pymodule]
fn fed3r(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFeatureDataset>()?;
    m.add_class::<PyManifest>()?;
    m.add_class::<PyStats>()?;
    m.add_class::<PyClassifier>()?;
    m.add_class::<PyRffMap>()?;
    m.add_function(wrap_pyfunction!(gen_gaussian_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(centralized_rr, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_exact, m)?)?;
    m.add_function(wrap_pyfunction!(run_fed3r, m)?)?;
    m.add_function(wrap_pyfunction!(run_lp, m)?)?;
    m.add_function(wrap_pyfunction!(fedncm_fit, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_temperature, m)?)?;
    m.add_function(wrap_pyfunction!(coupon_rounds, m)?)?;
    m.add_function(wrap_pyfunction!(comm_per_client, m)?)?;
    m.add_function(wrap_pyfunction!(compute_per_round, m)?)?;
    m.add("DEFAULT_LAMBDA", core::DEFAULT_LAMBDA)?;
    Ok(())
}
