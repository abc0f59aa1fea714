//! Python bindings for the subspace ANN indexes.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use subspace_ann::ann_avd;
use subspace_ann::datagen::{self, InstanceSpec};
use subspace_ann::io::InstanceFile;
use subspace_ann::{oracle, AnnIndex, MetricInstance};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn json_text(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    match obj.extract::<String>() {
        Ok(s) => Ok(s),
        Err(_) => obj.py().import("json")?.call_method1("dumps", (obj,))?.extract(),
    }
}

#[pyclass(frozen)]
struct Instance {
    file: InstanceFile,
    inner: Arc<MetricInstance>,
}

impl Instance {
    fn from_file(file: InstanceFile) -> PyResult<Self> {
        let inner = file.to_instance().map_err(err)?;
        Ok(Self { file, inner })
    }
}

#[pymethods]
impl Instance {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::from_file(serde_json::from_str(text).map_err(err)?)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::from_file(InstanceFile::read(&path).map_err(err)?)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.file).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.file.write(&path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.file.points.clone()
    }

    fn distance(&self, a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
        self.check(&a)?;
        self.check(&b)?;
        Ok(self.inner.raw_distance(&a, &b))
    }

    fn project(&self, a: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&a)?;
        Ok(self.inner.project(&a))
    }

    fn height(&self, a: Vec<f64>) -> PyResult<f64> {
        self.check(&a)?;
        Ok(self.inner.height(&a))
    }

    /// Distance evaluations counted so far.
    fn evals(&self) -> u64 {
        self.inner.evals()
    }

    fn __repr__(&self) -> String {
        format!("Instance(n={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

impl Instance {
    fn check(&self, q: &[f64]) -> PyResult<()> {
        if q.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!(
                "expected a vector of length {}, got {}",
                self.inner.dim(),
                q.len()
            )));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(PyValueError::new_err("coordinates must be finite"));
        }
        Ok(())
    }
}

/// Generates `(instance, queries)` from a spec given as a dict or JSON text.
#[pyfunction]
fn generate(spec: &Bound<'_, PyAny>) -> PyResult<(Instance, Vec<Vec<f64>>)> {
    let spec: InstanceSpec = serde_json::from_str(&json_text(spec)?).map_err(err)?;
    let g = datagen::generate(&spec).map_err(err)?;
    let file = InstanceFile::from_generated(&g, Some(spec));
    Ok((Instance { file, inner: g.instance.clone() }, g.queries))
}

/// Exact nearest neighbor by linear scan, as `(id, distance)`.
#[pyfunction]
fn exact_nn(instance: &Instance, q: Vec<f64>) -> PyResult<(usize, f64)> {
    instance.check(&q)?;
    Ok(oracle::exact_nn(&instance.inner, &q))
}

#[pyfunction]
fn ratio(answer: f64, exact: f64) -> f64 {
    oracle::ratio(answer, exact)
}

fn query_one(index: &dyn AnnIndex, instance: &Instance, q: Vec<f64>) -> PyResult<(usize, f64)> {
    instance.check(&q)?;
    let a = index.query(&q);
    Ok((a.id, a.distance))
}

fn query_all(
    py: Python<'_>,
    index: &(dyn AnnIndex + Sync),
    instance: &Instance,
    qs: Vec<Vec<f64>>,
) -> PyResult<Vec<(usize, f64)>> {
    for q in &qs {
        instance.check(q)?;
    }
    Ok(py.detach(|| {
        qs.iter()
            .map(|q| {
                let a = index.query(q);
                (a.id, a.distance)
            })
            .collect()
    }))
}

#[pyclass(frozen)]
struct ConstIndex {
    instance: Py<Instance>,
    index: subspace_ann::ConstAnnIndex,
}

#[pymethods]
impl ConstIndex {
    #[new]
    fn new(py: Python<'_>, instance: Py<Instance>) -> PyResult<Self> {
        let inner = instance.get().inner.clone();
        let index = py
            .detach(|| subspace_ann::ConstAnnIndex::build(inner))
            .map_err(err)?;
        Ok(Self { instance, index })
    }

    fn query(&self, q: Vec<f64>) -> PyResult<(usize, f64)> {
        query_one(&self.index, self.instance.get(), q)
    }

    fn query_many(&self, py: Python<'_>, qs: Vec<Vec<f64>>) -> PyResult<Vec<(usize, f64)>> {
        query_all(py, &self.index, self.instance.get(), qs)
    }

    /// Guaranteed approximation ratio.
    #[getter]
    fn bound(&self) -> f64 {
        6.0
    }
}

#[pyclass(frozen)]
struct EpsIndex {
    instance: Py<Instance>,
    index: subspace_ann::EpsAnnIndex,
}

#[pymethods]
impl EpsIndex {
    #[new]
    #[pyo3(signature = (instance, eps, c1 = subspace_ann::ann_eps::DEFAULT_C1))]
    fn new(py: Python<'_>, instance: Py<Instance>, eps: f64, c1: f64) -> PyResult<Self> {
        let inner = instance.get().inner.clone();
        let index = py
            .detach(|| subspace_ann::EpsAnnIndex::build_with(inner, eps, c1))
            .map_err(err)?;
        Ok(Self { instance, index })
    }

    fn query(&self, q: Vec<f64>) -> PyResult<(usize, f64)> {
        query_one(&self.index, self.instance.get(), q)
    }

    fn query_many(&self, py: Python<'_>, qs: Vec<Vec<f64>>) -> PyResult<Vec<(usize, f64)>> {
        query_all(py, &self.index, self.instance.get(), qs)
    }

    #[getter]
    fn bound(&self) -> f64 {
        1.0 + self.index.eps()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &serde_json::to_value(self.index.stats()).map_err(err)?)
    }
}

#[pyclass(frozen)]
struct AvdIndex {
    instance: Py<Instance>,
    index: subspace_ann::AvdIndex,
}

#[pymethods]
impl AvdIndex {
    /// With `target=True` the index is built so that its ratio is at most `1 + eps`.
    #[new]
    #[pyo3(signature = (instance, eps, c2 = ann_avd::DEFAULT_C2, target = false))]
    fn new(py: Python<'_>, instance: Py<Instance>, eps: f64, c2: f64, target: bool) -> PyResult<Self> {
        let inner = instance.get().inner.clone();
        let build_eps = if target { eps / 5.0 } else { eps };
        let index = py
            .detach(|| subspace_ann::AvdIndex::build_with(inner, build_eps, c2))
            .map_err(err)?;
        Ok(Self { instance, index })
    }

    fn query(&self, q: Vec<f64>) -> PyResult<(usize, f64)> {
        query_one(&self.index, self.instance.get(), q)
    }

    fn query_many(&self, py: Python<'_>, qs: Vec<Vec<f64>>) -> PyResult<Vec<(usize, f64)>> {
        query_all(py, &self.index, self.instance.get(), qs)
    }

    #[getter]
    fn bound(&self) -> f64 {
        1.0 + 5.0 * self.index.eps()
    }

    fn __len__(&self) -> usize {
        self.index.centers().len()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &serde_json::to_value(self.index.stats()).map_err(err)?)
    }
}

#[pyclass]
struct OnlineAvd {
    instance: Py<Instance>,
    state: subspace_ann::OnlineAvd,
}

#[pymethods]
impl OnlineAvd {
    #[new]
    #[pyo3(signature = (instance, eps = 0.2))]
    fn new(instance: Py<Instance>, eps: f64) -> PyResult<Self> {
        let state = subspace_ann::OnlineAvd::new(instance.get().inner.clone(), eps).map_err(err)?;
        Ok(Self { instance, state })
    }

    /// Returns `(id, outcome)` where outcome names the branch that answered.
    fn query(&mut self, q: Vec<f64>) -> PyResult<(usize, String)> {
        self.instance.get().check(&q)?;
        let (id, outcome) = self.state.query(&q);
        let name = serde_json::to_value(outcome).map_err(err)?;
        Ok((id, name.as_str().unwrap_or_default().to_owned()))
    }

    #[getter]
    fn bound(&self) -> f64 {
        1.0 + self.state.eps()
    }

    fn __len__(&self) -> usize {
        self.state.regions().len()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &serde_json::to_value(self.state.stats()).map_err(err)?)
    }

    fn save_regions(&self, path: PathBuf) -> PyResult<()> {
        let file = File::create(path).map_err(err)?;
        self.state.save_regions(BufWriter::new(file)).map_err(err)
    }

    /// Appends stored regions from a file and returns how many were read.
    fn load_regions(&mut self, path: PathBuf) -> PyResult<usize> {
        let file = File::open(path).map_err(err)?;
        self.state.load_regions(BufReader::new(file)).map_err(err)
    }
}

#[pymodule]
fn subspace_ann_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_class::<ConstIndex>()?;
    m.add_class::<EpsIndex>()?;
    m.add_class::<AvdIndex>()?;
    m.add_class::<OnlineAvd>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(exact_nn, m)?)?;
    m.add_function(wrap_pyfunction!(ratio, m)?)?;
    Ok(())
}
