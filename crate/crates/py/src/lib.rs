//! Python bindings: configuration, simulation, assessment, the offline
//! pipeline and the online estimator.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use phm_core::assess::Assessor;
use phm_core::bundle::{ModelBundle, OnlineModel};
use phm_core::config::PipelineConfig;
use phm_core::fault::{FaultVector, FAULT_NAMES};
use phm_core::gappy::CompressedSignal;
use phm_core::pipeline::{full_assessor, run_offline, Datasets};
use phm_core::report::run_report;
use phm_core::sim::{simulate_response, Tier};
use phm_core::PhmError;

fn err(e: PhmError) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn fault(k: Vec<f64>) -> PyResult<FaultVector> {
    FaultVector::from_slice(&k).map_err(err)
}

/// Pipeline configuration.
#[pyclass(name = "Config", module = "phm", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (seed, n_samples))]
    fn new(seed: u64, n_samples: usize) -> Self {
        PyConfig { inner: PipelineConfig::with_samples(seed, n_samples) }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyConfig { inner: PipelineConfig::from_toml(text).map_err(err)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.inner.compression.n_modes
    }
}

/// Truth-tier envelope for a fault vector; noise-free without a seed.
#[pyfunction]
#[pyo3(signature = (k, config, noise_seed = None))]
fn simulate(k: Vec<f64>, config: &PyConfig, noise_seed: Option<u64>) -> PyResult<Vec<f64>> {
    let cfg = &config.inner;
    let cmd = cfg.command.profile().map_err(err)?;
    Ok(simulate_response(&fault(k)?, &cmd, &cfg.actuator, Tier::Truth, noise_seed).map_err(err)?.y)
}

/// Full Bode-margin assessment.
#[pyfunction]
fn assess<'py>(py: Python<'py>, k: Vec<f64>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let a = full_assessor(&config.inner).map_err(err)?.assess_full(&fault(k)?).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("label", a.label.to_string())?;
    d.set_item("gain_margin_db", a.margins.gain_margin)?;
    d.set_item("phase_margin_deg", a.margins.phase_margin)?;
    d.set_item("cutoff_hz", a.margins.cutoff)?;
    Ok(d)
}

/// Generates the three datasets, trains a bundle and saves both.
/// Returns the bundle hash.
#[pyfunction]
fn offline(config: &PyConfig, data_dir: PathBuf, bundle_dir: PathBuf) -> PyResult<String> {
    let cfg = &config.inner;
    let data = Datasets::generate(cfg).map_err(err)?;
    data.save(&data_dir).map_err(err)?;
    let (bundle, _) = run_offline(cfg, &data.training, None).map_err(err)?;
    bundle.save(&bundle_dir).map_err(err)?;
    Ok(bundle.bundle_hash().to_string())
}

/// Writes the report files and returns the report hash.
#[pyfunction]
fn report(bundle_dir: PathBuf, data_dir: PathBuf, out_dir: PathBuf) -> PyResult<String> {
    let bundle = ModelBundle::load(&bundle_dir).map_err(err)?;
    let data = Datasets::load(&data_dir).map_err(err)?;
    run_report(&bundle, &data).and_then(|r| r.write(&out_dir)).map_err(err)
}

/// Online estimator loaded from the compressed-side files of a bundle.
#[pyclass(name = "Estimator", module = "phm")]
struct PyEstimator {
    inner: OnlineModel,
}

#[pymethods]
impl PyEstimator {
    #[new]
    fn new(bundle_dir: PathBuf) -> PyResult<Self> {
        Ok(PyEstimator { inner: OnlineModel::load(&bundle_dir).map_err(err)? })
    }

    #[getter]
    fn bundle_hash(&self) -> String {
        self.inner.bundle_hash.clone()
    }

    #[getter]
    fn schedule(&self) -> Vec<usize> {
        self.inner.schedule.indices.clone()
    }

    /// Wire form of a full-length acquisition sampled at the schedule.
    fn compress<'py>(&self, py: Python<'py>, y: Vec<f64>) -> PyResult<Bound<'py, PyBytes>> {
        let c = self.inner.compress(&y).map_err(err)?;
        Ok(PyBytes::new(py, &c.to_bytes()))
    }

    /// Surrogate label and score.
    fn assess(&self, k: Vec<f64>) -> PyResult<(String, f64)> {
        let k = fault(k)?;
        Ok((self.inner.surrogate.assess(&k).map_err(err)?.to_string(), self.inner.surrogate.score(&k)))
    }

    /// Fault vector and RUL band from compressed samples.
    #[pyo3(signature = (compressed, n_mc = None, seed = 0))]
    fn estimate<'py>(&self, py: Python<'py>, compressed: &[u8], n_mc: Option<usize>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let y_hat = CompressedSignal::from_bytes(compressed).map_err(err)?;
        let n_mc = n_mc.unwrap_or(self.inner.config.rul.monte_carlo);
        let e = self.inner.estimate(&y_hat, n_mc, seed).map_err(err)?;
        let k = PyDict::new(py);
        for (name, v) in FAULT_NAMES.iter().zip(e.k_estimated.0) {
            k.set_item(*name, v)?;
        }
        let d = PyDict::new(py);
        d.set_item("k_estimated", k)?;
        d.set_item("label", e.label.to_string())?;
        d.set_item("rul_5", e.rul.rul_5)?;
        d.set_item("rul_50", e.rul.rul_50)?;
        d.set_item("rul_95", e.rul.rul_95)?;
        d.set_item("censored", e.rul.censored)?;
        d.set_item("compute_ms", e.compute_ms)?;
        Ok(d)
    }
}

#[pymodule]
fn phm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyEstimator>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(assess, m)?)?;
    m.add_function(wrap_pyfunction!(offline, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add("FAULT_NAMES", FAULT_NAMES.to_vec())?;
    Ok(())
}
