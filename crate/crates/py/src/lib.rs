//! Python bindings. Structured results (splits, allocations, reports,
//! suite summaries) come back as plain dicts and lists.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use hiermatch::autodiff::Matrix;
use hiermatch::data::{allocate_labels, generate_synthetic, AllocationOptions, HierDataset, SyntheticConfig, TupleEntry, TupleSpec};
use hiermatch::harness::{apply_overrides, run_suite as core_run_suite, ExperimentSuite};
use hiermatch::hierarchy::LabelHierarchy;
use hiermatch::model::DisentangledModel;
use hiermatch::ssl::{self, SslAlgo};
use hiermatch::train::{self, TrainConfig, TrainMode};
use hiermatch::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Divergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(err)
}

#[pyclass(name = "Hierarchy", module = "hiermatch_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyHierarchy {
    inner: LabelHierarchy,
}

#[pymethods]
impl PyHierarchy {
    /// Builds a hierarchy from classes per level and, for each level below
    /// the coarsest, the parent of every class.
    #[new]
    fn new(classes_per_level: Vec<usize>, parents: Vec<Vec<usize>>) -> PyResult<Self> {
        Ok(PyHierarchy {
            inner: LabelHierarchy::new(classes_per_level, parents).map_err(err)?,
        })
    }

    #[staticmethod]
    fn uniform(coarsest: usize, branching: Vec<usize>) -> PyResult<Self> {
        Ok(PyHierarchy {
            inner: LabelHierarchy::uniform(coarsest, &branching).map_err(err)?,
        })
    }

    #[staticmethod]
    fn random(classes_per_level: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(PyHierarchy {
            inner: LabelHierarchy::random(&classes_per_level, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn cifar_two_level() -> Self {
        PyHierarchy {
            inner: LabelHierarchy::cifar_two_level(),
        }
    }

    #[staticmethod]
    fn cifar_three_level() -> Self {
        PyHierarchy {
            inner: LabelHierarchy::cifar_three_level(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyHierarchy {
            inner: LabelHierarchy::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn levels(&self) -> usize {
        self.inner.levels()
    }

    #[getter]
    fn classes_per_level(&self) -> Vec<usize> {
        self.inner.classes_per_level().to_vec()
    }

    /// Maps `label` at `fine_level` to its ancestor at `target_level`.
    fn coarsen(&self, fine_level: usize, label: usize, target_level: usize) -> PyResult<usize> {
        self.inner.coarsen(fine_level, label, target_level).map_err(err)
    }

    fn restrict(&self, levels: Vec<usize>) -> PyResult<Self> {
        Ok(PyHierarchy {
            inner: self.inner.restrict(&levels).map_err(err)?,
        })
    }

    /// Structural problems, empty when the hierarchy is valid.
    fn validate(&self) -> Vec<String> {
        self.inner.validate().iter().map(|v| v.to_string()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Hierarchy(classes_per_level={:?})", self.inner.classes_per_level())
    }
}

#[pyclass(name = "Dataset", module = "hiermatch_py", frozen)]
struct PyDataset {
    inner: HierDataset,
}

#[pymethods]
impl PyDataset {
    /// Samples a synthetic dataset. `config` is a dict of generator
    /// settings; missing keys take their defaults.
    #[staticmethod]
    #[pyo3(signature = (hierarchy, seed=0, config=None))]
    fn generate(py: Python<'_>, hierarchy: &PyHierarchy, seed: u64, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg: SyntheticConfig = match config {
            Some(c) => from_py(py, c)?,
            None => SyntheticConfig::default(),
        };
        let h = hierarchy.inner.clone();
        let inner = py.detach(|| generate_synthetic(&h, &cfg, seed)).map_err(err)?;
        Ok(PyDataset { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyDataset {
            inner: HierDataset::load(path.as_ref()).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn hierarchy(&self) -> PyHierarchy {
        PyHierarchy {
            inner: self.inner.hierarchy.clone(),
        }
    }

    #[getter]
    fn fine_labels(&self) -> Vec<usize> {
        self.inner.fine_labels.clone()
    }

    /// Labels of every sample at a 1-based level.
    fn labels_at(&self, level: usize) -> PyResult<Vec<usize>> {
        self.inner.labels_at(level).map_err(err)
    }

    fn rows(&self, indices: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.inner.len()) {
            return Err(PyValueError::new_err(format!("index {bad} out of range")));
        }
        Ok(self.inner.rows(&indices).to_rows())
    }

    /// Dict with `train`, `val` and `test` index lists.
    fn splits<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.splits)
    }
}

#[pyclass(name = "Model", module = "hiermatch_py", frozen)]
struct PyModel {
    inner: DisentangledModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: DisentangledModel::load_checkpoint(path.as_ref()).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save_checkpoint(path.as_ref()).map_err(err)
    }

    #[getter]
    fn levels(&self) -> usize {
        self.inner.levels()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.num_parameters()
    }

    /// Logits of the classifier at one model level for each input row.
    fn predict(&self, rows: Vec<Vec<f64>>, level: usize) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(rows)?;
        Ok(self.inner.predict_level(&x, level).map_err(err)?.to_rows())
    }
}

/// Parses a label-budget tuple such as "60,0,-". Dashes become None.
#[pyfunction]
fn parse_tuple(text: &str) -> PyResult<Vec<Option<usize>>> {
    let spec = TupleSpec::parse(text).map_err(err)?;
    Ok(spec
        .entries()
        .iter()
        .map(|e| match e {
            TupleEntry::Count(n) => Some(*n),
            _ => None,
        })
        .collect())
}

/// Feature widths of the per-level slices.
#[pyfunction]
fn split_plan(dim: usize, levels: usize) -> PyResult<Vec<usize>> {
    hiermatch::model::split_plan(dim, levels).map_err(err)
}

#[pyfunction]
fn sharpen(p: Vec<f64>, temperature: f64) -> PyResult<Vec<f64>> {
    ssl::sharpen(&p, temperature).map_err(err)
}

/// Mixes two inputs and their targets with a Beta(alpha, alpha) weight
/// folded onto [0.5, 1]. Returns (x, p, lambda).
#[pyfunction]
fn mixup(x1: Vec<f64>, p1: Vec<f64>, x2: Vec<f64>, p2: Vec<f64>, alpha: f64, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let row = |v: &[f64]| Matrix::row_vector(v);
    let m = ssl::mixup(&row(&x1), &row(&p1), &row(&x2), &row(&p2), alpha, seed).map_err(err)?;
    Ok((m.x.as_slice().to_vec(), m.p.as_slice().to_vec(), m.lambda))
}

/// Labeled sets per run level, the unlabeled set and the per-level pools.
#[pyfunction]
#[pyo3(signature = (dataset, tuple, seed=0))]
fn allocate<'py>(py: Python<'py>, dataset: &PyDataset, tuple: &str, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let spec = TupleSpec::parse(tuple).map_err(err)?;
    let sets = allocate_labels(&dataset.inner, &spec, &AllocationOptions::default(), seed).map_err(err)?;
    to_py(py, &sets)
}

/// Default trainer settings for an algorithm, as a dict.
#[pyfunction]
#[pyo3(signature = (algo="mixmatch"))]
fn default_config<'py>(py: Python<'py>, algo: &str) -> PyResult<Bound<'py, PyAny>> {
    let algo: SslAlgo = algo.parse().map_err(err)?;
    to_py(py, &TrainConfig::for_algo(algo))
}

/// Trains one model. `overrides` is a partial trainer-config dict. Returns
/// (report dict, Model).
#[pyfunction(name = "train")]
#[pyo3(signature = (dataset, tuple, mode="hiermatch", algo="mixmatch", seed=0, overrides=None))]
fn train_model<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    tuple: &str,
    mode: &str,
    algo: &str,
    seed: u64,
    overrides: Option<&Bound<'py, PyAny>>,
) -> PyResult<(Bound<'py, PyAny>, PyModel)> {
    let spec = TupleSpec::parse(tuple).map_err(err)?;
    let mode: TrainMode = mode.parse().map_err(err)?;
    let algo: SslAlgo = algo.parse().map_err(err)?;
    let mut cfg = TrainConfig::for_algo(algo);
    if let Some(o) = overrides {
        let patch: serde_json::Value = from_py(py, o)?;
        cfg = apply_overrides(&cfg, &patch).map_err(err)?;
    }
    cfg.mode = mode;
    cfg.seed = seed;
    let data = &dataset.inner;
    let outcome = py.detach(|| train::run(data, &spec, &cfg)).map_err(err)?;
    Ok((to_py(py, &outcome.report)?, PyModel { inner: outcome.model }))
}

/// Runs an experiment suite given as a dict and returns the aggregated
/// result as a dict.
#[pyfunction]
fn run_suite<'py>(py: Python<'py>, suite: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let suite: ExperimentSuite = from_py(py, suite)?;
    let result = py.detach(|| core_run_suite(&suite)).map_err(err)?;
    to_py(py, &result)
}

#[pymodule]
fn hiermatch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHierarchy>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(parse_tuple, m)?)?;
    m.add_function(wrap_pyfunction!(split_plan, m)?)?;
    m.add_function(wrap_pyfunction!(sharpen, m)?)?;
    m.add_function(wrap_pyfunction!(mixup, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
