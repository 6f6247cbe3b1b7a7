//! Python bindings: grids, constitutive models, the identity suite, simulations, and
//! stress-web conversion. Structured results cross the boundary as Python dicts.

use std::path::PathBuf;

use formelast::error::Error;
use formelast::harness::{self, ChartKind, ContextSpec, FieldFile, ScenarioConfig, SuiteConfig};
use formelast::stress::{ModelKind, WebTag};
use formelast::tensor::M3;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Shape(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_json<T: DeserializeOwned>(s: &str) -> PyResult<T> {
    serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Serialize through JSON into native Python objects.
fn to_object<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn chart_named(name: &str) -> PyResult<ChartKind> {
    parse_json(&format!("\"{}\"", name))
}

fn matrix(m: [[f64; 3]; 3]) -> M3 {
    M3::from_fn(|i, j| m[i][j])
}

fn rows(m: &M3) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

/// Structured grid on a named chart (`"cartesian"` or `"cylindrical"`), `n` nodes per axis.
#[pyclass(name = "Grid", frozen)]
struct PyGrid {
    inner: formelast::grid::Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(chart: &str, n: usize) -> PyResult<Self> {
        Ok(Self { inner: chart_named(chart)?.grid(n).map_err(to_py)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Largest grid spacing.
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h_max()
    }

    /// Nodes per axis.
    #[getter]
    fn shape(&self) -> [usize; 3] {
        self.inner.n
    }

    /// Chart coordinates of every node, node-major.
    fn nodes(&self) -> Vec<[f64; 3]> {
        self.inner.nodes()
    }

    /// Flat index of node `(i, j, k)`.
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        self.inner.index(i, j, k)
    }

    fn __repr__(&self) -> String {
        format!("Grid('{}', {:?})", self.inner.chart.name, self.inner.n)
    }
}

/// Isotropic hyperelastic model: `kind` is `"svk"` or `"neo_hookean"`.
#[pyclass(name = "ConstitutiveModel", frozen)]
struct PyModel {
    inner: formelast::stress::ConstitutiveModel,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(kind: &str, lam: f64, mu: f64) -> PyResult<Self> {
        let kind: ModelKind = parse_json(&format!("\"{}\"", kind))?;
        Ok(Self { inner: formelast::stress::ConstitutiveModel::new(kind, lam, mu).map_err(to_py)? })
    }

    /// Specific energy `ê(g; G)` at reference density `rho`.
    fn energy(&self, g: [[f64; 3]; 3], reference: [[f64; 3]; 3], rho: f64) -> PyResult<f64> {
        self.inner.energy_density(&matrix(g), &matrix(reference), rho).map_err(to_py)
    }

    /// Symmetric gradient `∂ê/∂g`.
    fn energy_gradient(&self, g: [[f64; 3]; 3], reference: [[f64; 3]; 3], rho: f64) -> PyResult<[[f64; 3]; 3]> {
        Ok(rows(&self.inner.energy_gradient(&matrix(g), &matrix(reference), rho).map_err(to_py)?))
    }

    /// Metric-gradient stress `2ρ ∂ê/∂g` at current density `rho_current`.
    fn stress(&self, g: [[f64; 3]; 3], reference: [[f64; 3]; 3], rho: f64, rho_current: f64) -> PyResult<[[f64; 3]; 3]> {
        let d = self.inner.energy_gradient(&matrix(g), &matrix(reference), rho).map_err(to_py)?;
        Ok(rows(&(2.0 * rho_current * d)))
    }

    fn __repr__(&self) -> String {
        format!("ConstitutiveModel({:?}, lam={}, mu={})", self.inner.kind, self.inner.lambda, self.inner.mu)
    }
}

/// Registered identities as `(name, topic, statement, variants)` tuples.
#[pyfunction]
fn identities() -> Vec<(String, String, String, Vec<String>)> {
    harness::registry()
        .iter()
        .map(|i| (i.name.into(), i.topic.into(), i.statement.into(), i.variants.iter().map(|v| v.to_string()).collect()))
        .collect()
}

/// Names of the nine stress-web entries, e.g. `"sigma_material"`.
#[pyfunction]
fn stress_tags() -> Vec<String> {
    WebTag::all().iter().map(|t| t.to_string()).collect()
}

/// Run the identity suite; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (resolutions = (9, 17), seed = 0, charts = None, identities = None, leg_swap = false))]
fn verify<'py>(
    py: Python<'py>,
    resolutions: (usize, usize),
    seed: u64,
    charts: Option<Vec<String>>,
    identities: Option<Vec<String>>,
    leg_swap: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = SuiteConfig { resolutions: [resolutions.0, resolutions.1], seed, leg_swap, ..SuiteConfig::default() };
    if let Some(c) = charts {
        cfg.charts = c.iter().map(|n| chart_named(n)).collect::<PyResult<_>>()?;
    }
    if let Some(ids) = identities {
        cfg.identities = ids;
    }
    let report = py.detach(|| harness::run_identity_suite(&cfg)).map_err(to_py)?;
    to_object(py, &report)
}

/// Run a scenario given as a JSON string, writing outputs into `out`; returns the summary.
#[pyfunction]
fn simulate<'py>(py: Python<'py>, config: &str, out: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let cfg: ScenarioConfig = parse_json(config)?;
    let summary = py.detach(|| harness::run_simulation(&cfg, &out)).map_err(to_py)?;
    to_object(py, &summary)
}

/// Convert a field (dict in the field-file layout) between stress-web entries at a
/// context (dict with chart, resolution, optional motion, t, density).
#[pyfunction]
fn convert<'py>(py: Python<'py>, field: &Bound<'py, PyDict>, to: &str, context: &Bound<'py, PyDict>) -> PyResult<Bound<'py, PyAny>> {
    let dumps = py.import("json")?.getattr("dumps")?;
    let field: FieldFile = parse_json(&dumps.call1((field,))?.extract::<String>()?)?;
    let spec: ContextSpec = parse_json(&dumps.call1((context,))?.extract::<String>()?)?;
    let from = field.tag.clone();
    let out = harness::convert_fields(&field, &from, to, &spec).map_err(to_py)?;
    to_object(py, &out)
}

#[pymodule]
fn formelast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(identities, m)?)?;
    m.add_function(wrap_pyfunction!(stress_tags, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(convert, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
