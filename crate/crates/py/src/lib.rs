use halfspace::casebook;
use halfspace::scalar::{QComplex, C64};
use halfspace::solver;
use halfspace::spectral::AtomicSpectrum;
use halfspace::weights;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

fn to_py(py: Python<'_>, v: &Value) -> PyResult<PyObject> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_py(py),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_py(py),
            None => n.as_f64().unwrap_or(f64::NAN).into_py(py),
        },
        Value::String(s) => s.into_py(py),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new_bound(py, items).into_py(py)
        }
        Value::Object(m) => {
            let d = PyDict::new_bound(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_py(py)
        }
    })
}

fn ser<T: serde::Serialize>(py: Python<'_>, x: &T) -> PyResult<PyObject> {
    let v = serde_json::to_value(x).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

fn val_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyfunction]
fn version() -> &'static str {
    halfspace::VERSION
}

/// U_1..U_n in q = e^{-2t}, as lists of {"power", "coeff"} with fraction strings.
#[pyfunction]
fn burgers_un(py: Python<'_>, n: usize) -> PyResult<PyObject> {
    let un = casebook::burgers_un(n);
    to_py(py, &Value::Array(un.iter().map(|u| u.to_json()).collect()))
}

#[pyfunction]
fn burgers_astar(py: Python<'_>, t: f64, n: usize) -> PyResult<PyObject> {
    ser(py, &casebook::burgers_astar(t, n).map_err(val_err)?)
}

#[pyfunction]
fn burgers_tstar(py: Python<'_>, a: f64, n: usize) -> PyResult<PyObject> {
    ser(py, &casebook::burgers_tstar(a, n))
}

#[pyfunction]
#[pyo3(signature = (a, t0=0.0, t1=3.0, samples=512, terms=100))]
fn colehopf_first_zero(a: f64, t0: f64, t1: f64, samples: usize, terms: usize) -> PyResult<f64> {
    casebook::colehopf_first_zero(C64::new(a, 0.0), samples, (t0, t1), terms).map(|r| r.t_ch).map_err(val_err)
}

/// C(2k,k)/4^k for k = 1..k_max as exact fraction strings.
#[pyfunction]
fn cosine_coefficients(k_max: usize) -> Vec<String> {
    casebook::cosine_coefficients(k_max).iter().map(|c| c.to_string()).collect()
}

/// Per-level summary of the exact Picard iterates of v' = v².
#[pyfunction]
fn ode_picard(py: Python<'_>, n_max: usize) -> PyResult<PyObject> {
    if n_max > 14 {
        return Err(PyValueError::new_err("n_max above 14 is out of reach"));
    }
    ser(py, &casebook::picard_rows(&casebook::ode_picard(n_max)))
}

#[pyfunction]
fn cascade_bounds(bl: f64, bu: f64, cl: f64, cu: f64, n_max: usize, ts: Vec<f64>) -> PyResult<bool> {
    casebook::cascade_bounds(bl, bu, cl, cu, n_max, &ts, 1e-10).map(|c| c.all_pass()).map_err(val_err)
}

#[pyfunction]
#[pyo3(signature = (name, z_re, z_im=0.0, params="null"))]
fn stationary_residual(py: Python<'_>, name: &str, z_re: f64, z_im: f64, params: &str) -> PyResult<PyObject> {
    let p: Value = serde_json::from_str(params).map_err(val_err)?;
    ser(py, &casebook::stationary_residual(name, C64::new(z_re, z_im), &p).map_err(val_err)?)
}

/// Exact lattice solve from JSON equation and data configs; returns the
/// spectrum and residual report.
#[pyfunction]
fn solve_lattice(py: Python<'_>, equation: &str, data: &str, lam: &str) -> PyResult<PyObject> {
    let eqv: Value = serde_json::from_str(equation).map_err(val_err)?;
    let dv: Value = serde_json::from_str(data).map_err(val_err)?;
    let (eq, h) = halfspace::equations::equation_from_json(&eqv).map_err(val_err)?;
    let u0 = AtomicSpectrum::<QComplex>::from_json(&dv).map_err(val_err)?;
    let lam = halfspace::scalar::parse_rational(lam).ok_or_else(|| PyValueError::new_err("lambda must be a rational"))?;
    let sol = solver::solve_lattice(&eq, &h, &u0, &lam).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &sol.to_json())
}

#[pyfunction]
fn weight_suite(py: Python<'_>, seed: u64, triples: usize, pairs: usize, grid: usize) -> PyResult<PyObject> {
    ser(py, &weights::weight_suite(seed, triples, pairs, grid))
}

/// Runs the command line tool in-process; returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    halfspace::cli::run_from(std::iter::once("halfspace".to_string()).chain(args))
}

#[pymodule]
pub fn halfspace_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(burgers_un, m)?)?;
    m.add_function(wrap_pyfunction!(burgers_astar, m)?)?;
    m.add_function(wrap_pyfunction!(burgers_tstar, m)?)?;
    m.add_function(wrap_pyfunction!(colehopf_first_zero, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(ode_picard, m)?)?;
    m.add_function(wrap_pyfunction!(cascade_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_residual, m)?)?;
    m.add_function(wrap_pyfunction!(solve_lattice, m)?)?;
    m.add_function(wrap_pyfunction!(weight_suite, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
