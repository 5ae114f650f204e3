use ndarray::Array2;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cpm_core::dataset::{self, Dataset};
use cpm_core::{eval, pipeline, CpmError, DimensionCurve, Embedding, Method, Metric, Rng, RunConfig, TargetDim};

fn to_py(e: CpmError) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(a: ndarray::ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn dataset(points: Vec<Vec<f64>>, labels: Option<Vec<i64>>) -> PyResult<Dataset> {
    Dataset::new(matrix(points)?, labels).map_err(to_py)
}

fn parse_metric(name: &str) -> PyResult<Metric> {
    match name {
        "euclidean" => Ok(Metric::Euclidean),
        "geodesic" => Ok(Metric::Geodesic),
        _ => Err(PyValueError::new_err(format!("unknown metric {name:?}"))),
    }
}

/// Estimated intrinsic dimension per scale. Radii are in units of `scale`,
/// the median pairwise distance.
#[pyclass(name = "DimensionCurve", frozen)]
struct PyDimensionCurve {
    inner: DimensionCurve,
}

#[pymethods]
impl PyDimensionCurve {
    #[getter]
    fn radii(&self) -> Vec<f64> {
        self.inner.radii().to_vec()
    }

    #[getter]
    fn n(&self) -> Vec<f64> {
        self.inner.n_of_r().to_vec()
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c()
    }

    #[getter]
    fn n0(&self) -> f64 {
        self.inner.n0()
    }

    #[getter]
    fn scale(&self) -> f64 {
        self.inner.scale()
    }

    /// Dimension at a normalized radius, linearly interpolated.
    fn n_at(&self, r: f64) -> f64 {
        cpm_core::dimest::n_m_at(&self.inner, r)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __len__(&self) -> usize {
        self.inner.radii().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "DimensionCurve(bins={}, n0={:.3}, c={:.4e})",
            self.inner.radii().len(),
            self.inner.n0(),
            self.inner.c()
        )
    }
}

/// Settings for an embedding run. Unset keyword arguments take the defaults.
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut text = String::from("{}");
        if let Some(kw) = kwargs {
            let json = kw.py().import("json")?;
            text = json.call_method1("dumps", (kw,))?.extract()?;
        }
        RunConfig::from_json(&text).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        RunConfig::from_json(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
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
    fn target_dim(&self) -> usize {
        self.inner.target_dim.get()
    }

    #[setter]
    fn set_target_dim(&mut self, d: usize) -> PyResult<()> {
        self.inner.target_dim = TargetDim::try_from(d).map_err(to_py)?;
        Ok(())
    }

    #[getter]
    fn max_iters(&self) -> usize {
        self.inner.max_iters
    }

    #[setter]
    fn set_max_iters(&mut self, v: usize) {
        self.inner.max_iters = v;
    }

    fn __repr__(&self) -> String {
        format!("RunConfig({})", compact(&self.inner.to_json()))
    }
}

fn compact(pretty: &str) -> String {
    pretty.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Version of the extension module.
#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Unit ball (label 1) plus a surrounding shell (label 2). Returns `(points, labels)`.
#[pyfunction]
#[pyo3(signature = (dim, n1, n2, inner=1.0, outer=1.3, seed=0))]
fn generate_ball_shell(
    dim: usize,
    n1: usize,
    n2: usize,
    inner: f64,
    outer: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<i64>)> {
    let data = dataset::generate_ball_shell(dim, n1, n2, inner, outer, &mut Rng::new(seed)).map_err(to_py)?;
    let (points, labels) = data.into_parts();
    Ok((rows(points.view()), labels.unwrap_or_default()))
}

#[pyfunction]
#[pyo3(signature = (n, dim, seed=0))]
fn generate_gaussian(n: usize, dim: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let data = dataset::generate_gaussian_cloud(n, dim, &mut Rng::new(seed)).map_err(to_py)?;
    Ok(rows(data.points()))
}

#[pyfunction]
#[pyo3(signature = (n, p=6, noise_variance=25.0, seed=0))]
fn generate_swiss_roll(n: usize, p: usize, noise_variance: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let data = dataset::generate_augmented_swiss_roll(n, p, noise_variance, &mut Rng::new(seed)).map_err(to_py)?;
    Ok(rows(data.points()))
}

#[pyfunction]
#[pyo3(signature = (points, metric="euclidean", knn=10))]
fn distance_matrix(points: Vec<Vec<f64>>, metric: &str, knn: usize) -> PyResult<Vec<Vec<f64>>> {
    let data = dataset(points, None)?;
    let cfg = RunConfig { metric: parse_metric(metric)?, knn, ..RunConfig::default() };
    let (dist, _) = pipeline::metric_distances(&data, &cfg, &mut Vec::new()).map_err(to_py)?;
    Ok(rows(dist.values()))
}

#[pyfunction]
#[pyo3(signature = (points, metric="euclidean", knn=10, num_scales=50))]
fn dimension_curve(
    points: Vec<Vec<f64>>,
    metric: &str,
    knn: usize,
    num_scales: usize,
) -> PyResult<PyDimensionCurve> {
    let data = dataset(points, None)?;
    let cfg = RunConfig { metric: parse_metric(metric)?, knn, num_scales, ..RunConfig::default() };
    let (dist, _) = pipeline::metric_distances(&data, &cfg, &mut Vec::new()).map_err(to_py)?;
    let est = cpm_core::dimest::dimension_curve(&dist, &cfg.dimest_options(data.dim())).map_err(to_py)?;
    Ok(PyDimensionCurve { inner: est.curve })
}

/// Runs the full pipeline. Returns a dict with the embedding, KL history,
/// dimension curve (None for MDS), bridging flag and warnings. Keyword
/// arguments override fields of `config`.
#[pyfunction]
#[pyo3(signature = (points, config=None, *, dim=None, method=None, metric=None, seed=None))]
fn embed<'py>(
    py: Python<'py>,
    points: Vec<Vec<f64>>,
    config: Option<PyRunConfig>,
    dim: Option<usize>,
    method: Option<&str>,
    metric: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let data = dataset(points, None)?;
    let mut cfg = config.map(|c| c.inner).unwrap_or_default();
    if let Some(d) = dim {
        cfg.target_dim = TargetDim::try_from(d).map_err(to_py)?;
    }
    if let Some(m) = method {
        cfg.method = match m {
            "cpm" => Method::Cpm,
            "mds" => Method::Mds,
            _ => return Err(PyValueError::new_err(format!("unknown method {m:?}"))),
        };
    }
    if let Some(m) = metric {
        cfg.metric = parse_metric(m)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = py.detach(|| pipeline::run(&data, &cfg)).map_err(|e| {
        let msg = e.to_string();
        if e.source.is_numerical() {
            PyArithmeticError::new_err(msg)
        } else {
            PyValueError::new_err(msg)
        }
    })?;
    let d = PyDict::new(py);
    d.set_item("embedding", rows(out.embedding.coords()))?;
    d.set_item("kl_history", out.kl_history)?;
    d.set_item("iterations", out.iterations)?;
    match out.dimension_curve {
        Some(inner) => d.set_item("dimension_curve", PyDimensionCurve { inner })?,
        None => d.set_item("dimension_curve", py.None())?,
    }
    d.set_item("bridged", out.bridged)?;
    d.set_item("warnings", out.warnings)?;
    Ok(d)
}

/// Spearman correlation between original and embedded pair distances.
#[pyfunction]
fn spearman(points: Vec<Vec<f64>>, embedding: Vec<Vec<f64>>) -> PyResult<f64> {
    let data = dataset(points, None)?;
    let emb = Embedding::new(matrix(embedding)?).map_err(to_py)?;
    let dist = cpm_core::metricspace::euclidean_distance_matrix(&data);
    let pairs = eval::shepard_pairs(&dist, &emb).map_err(to_py)?;
    eval::spearman_rank_correlation(&pairs).map_err(to_py)
}

/// Ball/shell separation score of an embedding (labels 1 and 2).
#[pyfunction]
fn crowding_score(embedding: Vec<Vec<f64>>, labels: Vec<i64>) -> PyResult<f64> {
    let emb = Embedding::new(matrix(embedding)?).map_err(to_py)?;
    eval::crowding_overlap_score(&emb, &labels).map_err(to_py)
}

#[pymodule]
fn cpm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyDimensionCurve>()?;
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(generate_ball_shell, m)?)?;
    m.add_function(wrap_pyfunction!(generate_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(generate_swiss_roll, m)?)?;
    m.add_function(wrap_pyfunction!(distance_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(dimension_curve, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(crowding_score, m)?)?;
    Ok(())
}
