//! Python bindings for `philap`.
//!
//! Descriptors, fields and options cross the boundary as dicts (or JSON
//! strings) in the same shape as the problem-file format; reports come back
//! as dicts with the solution under `"solution"` as a list of rows.

use std::sync::Arc;

use philap::cli::{self, Command, PhiDescriptor, PhiName, RunConfig};
use philap::grid::{GridFunction, InteriorFunction};
use philap::nonpotential::{self, CustomField, HomotopyOptions, NonlinearField};
use philap::variational::{self, PotentialField};
use philap::verify::{self, Problem};
use philap::{BoundaryLaw, Error, LawDescriptor, SolveOptions};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyString};
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::NotConverged(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Accepts a dict (or anything `json.dumps` takes) or a JSON string.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text = if let Ok(s) = obj.cast::<PyString>() {
        s.to_string()
    } else {
        let json = PyModule::import(obj.py(), "json")?;
        json.call_method1("dumps", (obj,))?.extract::<String>()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn solve_options(obj: Option<&Bound<'_, PyAny>>) -> PyResult<SolveOptions> {
    obj.map_or_else(|| Ok(SolveOptions::default()), from_py)
}

fn with_solution<'py>(py: Python<'py>, report: &impl Serialize, u: &GridFunction) -> PyResult<Bound<'py, PyAny>> {
    let out = to_py(py, report)?;
    out.set_item("solution", u.rows())?;
    Ok(out)
}

/// An odd homeomorphism of the open ball of radius `a` onto `R^N`.
#[pyclass(name = "PhiMap", frozen)]
struct PyPhiMap {
    inner: philap::PhiMap,
}

#[pymethods]
impl PyPhiMap {
    #[staticmethod]
    #[pyo3(signature = (a = 1.0))]
    fn relativistic(a: f64) -> PyResult<Self> {
        Ok(Self { inner: philap::PhiMap::relativistic(a).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (p, a = 1.0))]
    fn p_relativistic(p: f64, a: f64) -> PyResult<Self> {
        Ok(Self { inner: philap::PhiMap::p_relativistic(p, a).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (p, q, a = 1.0))]
    fn double_phase(p: f64, q: f64, a: f64) -> PyResult<Self> {
        let desc = PhiDescriptor { kind: PhiName::DoublePhase, a, p: Some(p), q: Some(q) };
        Ok(Self { inner: desc.build().map_err(err)? })
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius()
    }

    /// `φ(y)` for `|y| < a`.
    fn eval(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.eval(&y).map_err(err)
    }

    /// `Φ(y)`, finite on the closed ball.
    fn potential(&self, y: Vec<f64>) -> PyResult<f64> {
        self.inner.potential(&y).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// A boundary law `γ` on `R^N × R^N`, built from a descriptor such as
/// `{"name": "periodic"}`.
#[pyclass(name = "BoundaryLaw", frozen)]
struct PyBoundaryLaw {
    inner: BoundaryLaw,
    descriptor: LawDescriptor,
}

#[pymethods]
impl PyBoundaryLaw {
    /// `default_sigma` fills in the strip width of the Steklov laws when the
    /// descriptor leaves it out.
    #[new]
    #[pyo3(signature = (descriptor, dim, default_sigma = None))]
    fn new(descriptor: &Bound<'_, PyAny>, dim: usize, default_sigma: Option<f64>) -> PyResult<Self> {
        let descriptor: LawDescriptor = from_py(descriptor)?;
        let inner = descriptor.build(dim, default_sigma).map_err(err)?;
        Ok(Self { inner, descriptor })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn descriptor<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.descriptor)
    }

    fn __repr__(&self) -> String {
        format!("BoundaryLaw({:?}, dim={})", self.descriptor, self.inner.dim())
    }
}

fn interior(h: Vec<Vec<f64>>) -> PyResult<InteriorFunction> {
    InteriorFunction::from_rows(&h).map_err(err)
}

/// Solves `-Δφ(Δu(n-1)) + u(n) = h(n)` with `w ∈ γ(u(0), u(T+1))`.
#[pyfunction]
#[pyo3(signature = (phi, law, h, options = None))]
fn solve_q<'py>(
    py: Python<'py>,
    phi: &PyPhiMap,
    law: &PyBoundaryLaw,
    h: Vec<Vec<f64>>,
    options: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let h = interior(h)?;
    let opts = solve_options(options)?;
    let report = py
        .detach(|| philap::convex_core::solve_q_general(&phi.inner, &law.inner, &h, &opts))
        .map_err(err)?;
    with_solution(py, &report, &report.solution)
}

/// Solves `-Δφ(Δu(n-1)) = f(n, u)` by the fixed-point homotopy. `field` is a
/// catalog descriptor or a callable `f(n, rows) -> list` together with `horizon`.
#[pyfunction]
#[pyo3(signature = (phi, law, field, horizon = None, options = None, homotopy = None))]
fn picard_solve<'py>(
    py: Python<'py>,
    phi: &PyPhiMap,
    law: &PyBoundaryLaw,
    field: &Bound<'py, PyAny>,
    horizon: Option<usize>,
    options: Option<&Bound<'py, PyAny>>,
    homotopy: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let field = if field.is_callable() {
        let horizon = horizon.ok_or_else(|| PyValueError::new_err("a callable field needs horizon"))?;
        let dim = law.inner.dim();
        let callable: Py<PyAny> = field.clone().unbind();
        NonlinearField::Custom(CustomField {
            dim,
            horizon,
            // a failing callback yields NaN, which the solver reports as non-finite
            eval: Arc::new(move |n: usize, u: &GridFunction| {
                Python::attach(|py| {
                    callable
                        .call1(py, (n, u.rows()))
                        .and_then(|v| v.extract::<Vec<f64>>(py))
                        .unwrap_or_else(|_| vec![f64::NAN; dim])
                })
            }),
        })
    } else {
        from_py(field)?
    };
    let opts = solve_options(options)?;
    let homotopy: HomotopyOptions = homotopy.map_or_else(|| Ok(HomotopyOptions::default()), from_py)?;
    let report = py
        .detach(|| nonpotential::picard_solve(&phi.inner, &law.inner, &field, &opts, &homotopy))
        .map_err(err)?;
    with_solution(py, &report, &report.solution)
}

/// Global minimizer of the energy functional for a potential field.
#[pyfunction]
#[pyo3(signature = (phi, law, field, h, options = None))]
fn minimize_energy<'py>(
    py: Python<'py>,
    phi: &PyPhiMap,
    law: &PyBoundaryLaw,
    field: &Bound<'py, PyAny>,
    h: Vec<Vec<f64>>,
    options: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let field: PotentialField = from_py(field)?;
    let h = interior(h)?;
    let opts = solve_options(options)?;
    let report = py
        .detach(|| variational::minimize_energy(&phi.inner, &law.inner, &field, &h, &opts))
        .map_err(err)?;
    with_solution(py, &report, &report.point)
}

/// Critical point of saddle type, with the reduced function along the way.
#[pyfunction]
#[pyo3(signature = (phi, law, field, h, options = None))]
fn saddle_search<'py>(
    py: Python<'py>,
    phi: &PyPhiMap,
    law: &PyBoundaryLaw,
    field: &Bound<'py, PyAny>,
    h: Vec<Vec<f64>>,
    options: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let field: PotentialField = from_py(field)?;
    let h = interior(h)?;
    let opts = solve_options(options)?;
    let report = py
        .detach(|| variational::saddle_search(&phi.inner, &law.inner, &field, &h, &opts))
        .map_err(err)?;
    with_solution(py, &report, &report.point)
}

/// Energy of the grid function `u` (`inf` outside the domain).
#[pyfunction]
fn energy_value(
    phi: &PyPhiMap,
    law: &PyBoundaryLaw,
    field: &Bound<'_, PyAny>,
    h: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
) -> PyResult<f64> {
    let field: PotentialField = from_py(field)?;
    let u = GridFunction::from_rows(&u).map_err(err)?;
    variational::energy_value(&phi.inner, &law.inner, &field, &interior(h)?, &u).map_err(err)
}

/// Smallest Rayleigh quotient over the cone of the law at the origin.
#[pyfunction]
#[pyo3(signature = (a, law, horizon, options = None))]
fn lambda1<'py>(
    py: Python<'py>,
    a: f64,
    law: &PyBoundaryLaw,
    horizon: usize,
    options: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = solve_options(options)?;
    let est = variational::lambda1_estimate(a, &law.inner, horizon, law.inner.dim(), &opts).map_err(err)?;
    with_solution(py, &est, &est.minimizer)
}

/// Residuals and a priori estimates of `u` for one of three problems:
/// the regularized one (`h` only), a nonpotential field (`field` only) or
/// a potential field (`field` and `h`).
#[pyfunction]
#[pyo3(signature = (phi, law, u, h = None, field = None, lambda1 = None))]
fn residual_report<'py>(
    py: Python<'py>,
    phi: &PyPhiMap,
    law: &PyBoundaryLaw,
    u: Vec<Vec<f64>>,
    h: Option<Vec<Vec<f64>>>,
    field: Option<&Bound<'py, PyAny>>,
    lambda1: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let u = GridFunction::from_rows(&u).map_err(err)?;
    let h = h.map(interior).transpose()?;
    let report = match (field, &h) {
        (None, Some(h)) => verify::residual_report(&phi.inner, &law.inner, Problem::Regularized(h), &u, lambda1),
        (Some(f), None) => {
            let f: NonlinearField = from_py(f)?;
            verify::residual_report(&phi.inner, &law.inner, Problem::Field(&f), &u, lambda1)
        }
        (Some(f), Some(h)) => {
            let f: PotentialField = from_py(f)?;
            verify::residual_report(&phi.inner, &law.inner, Problem::Potential { field: &f, h }, &u, lambda1)
        }
        (None, None) => return Err(PyValueError::new_err("pass h, field, or both")),
    };
    let out = to_py(py, &report)?;
    out.set_item("passes", report.passes(1e-10))?;
    Ok(out)
}

/// Randomized check of the a priori estimates over `batch` instances.
#[pyfunction]
#[pyo3(signature = (phi, law, batch = 100, seed = 0))]
fn check_estimates<'py>(
    py: Python<'py>,
    phi: &PyPhiMap,
    law: &PyBoundaryLaw,
    batch: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let summary = py.detach(|| verify::check_estimates(&phi.inner, &law.inner, batch, seed));
    let out = to_py(py, &summary)?;
    out.set_item("passed", summary.passed())?;
    Ok(out)
}

/// Runs a problem file (dict or JSON text) as the `philap` binary would and
/// returns the report; `command` is one of solve, energy-min, saddle,
/// lambda1, verify.
#[pyfunction]
#[pyo3(signature = (spec, command = "solve", seed = None, tol = None, batch = None))]
fn run_problem<'py>(
    py: Python<'py>,
    spec: &Bound<'py, PyAny>,
    command: &str,
    seed: Option<u64>,
    tol: Option<f64>,
    batch: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let text = match spec.cast::<PyDict>() {
        Ok(d) => PyModule::import(py, "json")?.call_method1("dumps", (d,))?.extract::<String>()?,
        Err(_) => spec.extract::<String>()?,
    };
    let spec = cli::parse_problem(&text).map_err(err)?;
    let command: Command = command.parse().map_err(err)?;
    let config = RunConfig { seed, tol, out: None, workers: None, batch };
    let outcome = py.detach(|| cli::run(&spec, command, &config)).map_err(err)?;
    let report = to_py(py, &outcome.report)?;
    if let Some(u) = &outcome.solution {
        report.set_item("solution", u.rows())?;
    }
    Ok(report)
}

#[pymodule]
pub fn pyphilap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPhiMap>()?;
    m.add_class::<PyBoundaryLaw>()?;
    m.add_function(wrap_pyfunction!(solve_q, m)?)?;
    m.add_function(wrap_pyfunction!(picard_solve, m)?)?;
    m.add_function(wrap_pyfunction!(minimize_energy, m)?)?;
    m.add_function(wrap_pyfunction!(saddle_search, m)?)?;
    m.add_function(wrap_pyfunction!(energy_value, m)?)?;
    m.add_function(wrap_pyfunction!(lambda1, m)?)?;
    m.add_function(wrap_pyfunction!(residual_report, m)?)?;
    m.add_function(wrap_pyfunction!(check_estimates, m)?)?;
    m.add_function(wrap_pyfunction!(run_problem, m)?)?;
    Ok(())
}
