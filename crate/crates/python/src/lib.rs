//! Python bindings. Complex numbers cross the boundary as Python `complex`.

use std::path::PathBuf;
use std::str::FromStr;

use cvnn::backprop::{grad_check, loss_and_gradient, GradCheckStatus};
use cvnn::complex::{cauchy_riemann_residual, DEFAULT_STEP};
use cvnn::dataset::{gen, Dataset, Task, TaskParams};
use cvnn::loss::{loss, loss_partials, LossKind};
use cvnn::mvn::MvnConfig;
use cvnn::network::{Mode, Network};
use cvnn::train::{evaluate, train_mvn, train_sgd, EpochMetrics};
use cvnn::{ActivationKind, CvnnError, InitScheme, OutputMap, TrainConfig};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(cvnn, CvnnException, PyValueError, "Raised for every error reported by the library.");

fn err(e: CvnnError) -> PyErr {
    CvnnException::new_err(e.to_string())
}

fn parse<T: FromStr<Err = CvnnError>>(text: &str) -> PyResult<T> {
    text.parse().map_err(err)
}

fn metrics_dicts<'py>(py: Python<'py>, rows: &[EpochMetrics]) -> PyResult<Vec<Bound<'py, PyDict>>> {
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("epoch", r.epoch)?;
            d.set_item("loss", r.loss)?;
            d.set_item("accuracy", r.accuracy)?;
            Ok(d)
        })
        .collect()
}

/// A feed-forward complex-valued network.
#[pyclass(name = "Network", module = "cvnn")]
struct PyNetwork {
    inner: Network,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    #[pyo3(signature = (input_width, widths, activation="ctanh", output_activation=None, mode="split", init="polar", bias=true, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn random(
        input_width: usize,
        widths: Vec<usize>,
        activation: &str,
        output_activation: Option<&str>,
        mode: &str,
        init: &str,
        bias: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let hidden: ActivationKind = parse(activation)?;
        let output = output_activation.map(parse).transpose()?.unwrap_or(hidden);
        let inner = Network::random(input_width, &widths, hidden, output, parse::<Mode>(mode)?, parse::<InitScheme>(init)?, bias, seed).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Network::from_json(text).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Network::load(&path).map(|inner| Self { inner }).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn input_width(&self) -> usize {
        self.inner.input_width()
    }

    #[getter]
    fn output_width(&self) -> usize {
        self.inner.output_width()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.layers.len()
    }

    #[getter]
    fn output_map(&self) -> Option<String> {
        self.inner.output_map.map(|m| m.to_string())
    }

    #[setter]
    fn set_output_map(&mut self, name: Option<&str>) -> PyResult<()> {
        self.inner.output_map = name.map(parse::<OutputMap>).transpose()?;
        Ok(())
    }

    /// Weight matrix of layer `index` as a list of rows; the bias is the last column.
    fn weights(&self, index: usize) -> PyResult<Vec<Vec<Complex64>>> {
        let layer = self
            .inner
            .layers
            .get(index)
            .ok_or_else(|| CvnnException::new_err(format!("layer {index} out of range")))?;
        Ok((0..layer.weights.rows()).map(|r| layer.weights.row(r).to_vec()).collect())
    }

    fn predict(&self, x: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.inner.predict(&x).map_err(err)
    }

    /// Loss of one sample and its weight gradients, one matrix per layer.
    #[pyo3(signature = (x, d, loss="quadratic"))]
    fn gradient(&self, x: Vec<Complex64>, d: Vec<Complex64>, loss: &str) -> PyResult<(f64, Vec<Vec<Vec<Complex64>>>)> {
        let (value, g) = loss_and_gradient(&self.inner, &x, &d, parse(loss)?).map_err(err)?;
        let mats = g
            .weights
            .iter()
            .map(|m| (0..m.rows()).map(|r| m.row(r).to_vec()).collect())
            .collect();
        Ok((value, mats))
    }

    #[pyo3(signature = (x, d, loss="quadratic", h=DEFAULT_STEP, tol=1e-5))]
    fn grad_check<'py>(&self, py: Python<'py>, x: Vec<Complex64>, d: Vec<Complex64>, loss: &str, h: f64, tol: f64) -> PyResult<Bound<'py, PyDict>> {
        let r = grad_check(&self.inner, &x, &d, parse(loss)?, h, tol).map_err(err)?;
        let status = match r.status {
            GradCheckStatus::Pass => "pass",
            GradCheckStatus::Fail => "fail",
            GradCheckStatus::Inconclusive => "inconclusive",
        };
        let out = PyDict::new(py);
        out.set_item("status", status)?;
        out.set_item("max_rel_err", r.max_rel_err)?;
        out.set_item("max_abs_err", r.max_abs_err)?;
        out.set_item("tolerance", r.tolerance)?;
        out.set_item("loose", r.loose)?;
        Ok(out)
    }

    #[pyo3(signature = (data, loss="quadratic"))]
    fn evaluate(&self, data: &PyDataset, loss: &str) -> PyResult<(f64, Option<f64>)> {
        evaluate(&self.inner, &data.inner, parse(loss)?).map_err(err)
    }

    /// Minibatch SGD in place; returns one dict per epoch.
    #[pyo3(signature = (data, eta=0.1, epochs=100, batch=8, seed=0, loss="quadratic"))]
    #[allow(clippy::too_many_arguments)]
    fn train<'py>(&mut self, py: Python<'py>, data: &PyDataset, eta: f64, epochs: usize, batch: usize, seed: u64, loss: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let config = TrainConfig {
            eta,
            epochs,
            batch_size: batch,
            seed,
            loss: parse(loss)?,
        };
        let rows = train_sgd(&mut self.inner, &data.inner, &config, false, |_| {}).map_err(err)?;
        metrics_dicts(py, &rows)
    }

    /// MVN error-correction learning in place; returns one dict per epoch.
    #[pyo3(signature = (data, threshold=0.1, max_epochs=200))]
    fn train_mvn<'py>(&mut self, py: Python<'py>, data: &PyDataset, threshold: f64, max_epochs: usize) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let config = MvnConfig {
            error_threshold: threshold,
            max_epochs,
            ..MvnConfig::default()
        };
        let (trained, _, _, rows) = train_mvn(&self.inner, &data.inner, &config, false).map_err(err)?;
        self.inner = trained;
        metrics_dicts(py, &rows)
    }

    fn __eq__(&self, other: PyRef<'_, PyNetwork>) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let widths: Vec<String> = self.inner.layers.iter().map(|l| l.width().to_string()).collect();
        format!("Network(input_width={}, widths=[{}], mode={})", self.inner.input_width(), widths.join(", "), self.inner.mode)
    }
}

/// Samples of one of the synthetic tasks.
#[pyclass(name = "Dataset", module = "cvnn")]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (task, n=256, seed=0, theta=None, r1=None, r2=None, radial_noise=None, spread=None))]
    #[allow(clippy::too_many_arguments)]
    fn generate(task: &str, n: usize, seed: u64, theta: Option<f64>, r1: Option<f64>, r2: Option<f64>, radial_noise: Option<f64>, spread: Option<f64>) -> PyResult<Self> {
        let base = TaskParams::default();
        let params = TaskParams {
            theta: theta.unwrap_or(base.theta),
            r1: r1.unwrap_or(base.r1),
            r2: r2.unwrap_or(base.r2),
            radial_noise: radial_noise.unwrap_or(base.radial_noise),
            spread: spread.unwrap_or(base.spread),
        };
        gen(parse::<Task>(task)?, n, seed, &params).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Dataset::from_json(text).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Dataset::load(&path).map(|inner| Self { inner }).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn task(&self) -> String {
        self.inner.task.to_string()
    }

    #[getter]
    fn inputs(&self) -> Vec<Vec<Complex64>> {
        self.inner.inputs.clone()
    }

    #[getter]
    fn targets(&self) -> Vec<Vec<Complex64>> {
        self.inner.targets.clone()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<usize>> {
        self.inner.labels.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Applies the named activation to `z`.
#[pyfunction]
fn activate(name: &str, z: Complex64) -> PyResult<Complex64> {
    Ok(parse::<ActivationKind>(name)?.apply(z))
}

/// `(df/dz, df/dz̄)` of the named activation at `z`.
#[pyfunction]
fn activation_partials(name: &str, z: Complex64) -> PyResult<(Complex64, Complex64)> {
    let p = parse::<ActivationKind>(name)?.partials(z).map_err(err)?;
    Ok((p.d_dz, p.d_dzbar))
}

/// Finite-difference `|df/dz̄|` of the named activation at `z`.
#[pyfunction]
#[pyo3(signature = (name, z, h=DEFAULT_STEP))]
fn holomorphy_residual(name: &str, z: Complex64, h: f64) -> PyResult<f64> {
    let act = parse::<ActivationKind>(name)?;
    cauchy_riemann_residual(|w| act.apply(w), z, h).map_err(err)
}

#[pyfunction(name = "loss")]
fn py_loss(kind: &str, o: Vec<Complex64>, d: Vec<Complex64>) -> PyResult<f64> {
    loss(parse::<LossKind>(kind)?, &o, &d).map_err(err)
}

#[pyfunction(name = "loss_partials")]
fn py_loss_partials(kind: &str, o: Vec<Complex64>, d: Vec<Complex64>) -> PyResult<Vec<(Complex64, Complex64)>> {
    let pairs = loss_partials(parse::<LossKind>(kind)?, &o, &d).map_err(err)?;
    Ok(pairs.into_iter().map(|p| (p.d_dz, p.d_dzbar)).collect())
}

#[pymodule(name = "cvnn")]
fn cvnn_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CvnnError", m.py().get_type::<CvnnException>())?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(activate, m)?)?;
    m.add_function(wrap_pyfunction!(activation_partials, m)?)?;
    m.add_function(wrap_pyfunction!(holomorphy_residual, m)?)?;
    m.add_function(wrap_pyfunction!(py_loss, m)?)?;
    m.add_function(wrap_pyfunction!(py_loss_partials, m)?)?;
    Ok(())
}
