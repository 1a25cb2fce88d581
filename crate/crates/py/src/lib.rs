//! Python bindings: config handling, experiment runs, refinement studies.

use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pqflow_core::cli::{self, Axis};
use pqflow_core::elliptic::{solve_torsion, EllipticConfig};
use pqflow_core::{Error, Mesh, ProblemParams};

create_exception!(pqflow, ConfigError, PyValueError);
create_exception!(pqflow, SolverError, PyRuntimeError);
create_exception!(pqflow, InvariantError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.exit_code() {
        2 => ConfigError::new_err(msg),
        4 => InvariantError::new_err(msg),
        _ => SolverError::new_err(msg),
    }
}

fn with_out(overrides: Option<Vec<String>>, out: Option<String>) -> Vec<String> {
    let mut set = overrides.unwrap_or_default();
    if let Some(dir) = out {
        set.push(format!("output.dir={}", toml_string(&dir)));
    }
    set
}

fn toml_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Configuration keys with a one-line description each.
#[pyfunction]
fn keys() -> Vec<(String, String)> {
    cli::KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Parses and validates a TOML config, returning it with every default filled in.
#[pyfunction]
#[pyo3(signature = (text, overrides=None))]
fn canonical_config(text: &str, overrides: Option<Vec<String>>) -> PyResult<String> {
    let cfg = cli::parse_config_with(text, &overrides.unwrap_or_default()).map_err(to_py)?;
    cfg.validate().map_err(to_py)?;
    cli::serialize_config(&cfg).map_err(to_py)
}

/// Runs the configured experiment; returns the output directory and run_meta.json text.
#[pyfunction]
#[pyo3(signature = (text, overrides=None, out=None))]
fn run(py: Python<'_>, text: &str, overrides: Option<Vec<String>>, out: Option<String>) -> PyResult<(String, String)> {
    let cfg = cli::parse_config_with(text, &with_out(overrides, out)).map_err(to_py)?;
    let rep = py.detach(|| cli::run_experiment(&cfg)).map_err(to_py)?;
    let meta = serde_json::to_string_pretty(&rep.meta).map_err(|e| SolverError::new_err(e.to_string()))?;
    Ok((rep.dir.display().to_string(), meta))
}

/// Observed convergence orders over `levels` refinements along `axis` ("time" or "space").
#[pyfunction]
#[pyo3(signature = (text, levels=3, axis="time", overrides=None, out=None))]
fn refine(
    py: Python<'_>,
    text: &str,
    levels: usize,
    axis: &str,
    overrides: Option<Vec<String>>,
    out: Option<String>,
) -> PyResult<Vec<f64>> {
    let axis = match axis {
        "time" => Axis::Time,
        "space" => Axis::Space,
        other => return Err(ConfigError::new_err(format!("axis must be time or space, got {other}"))),
    };
    let cfg = cli::parse_config_with(text, &with_out(overrides, out)).map_err(to_py)?;
    let rep = py.detach(|| cli::refinement_study(&cfg, levels, axis)).map_err(to_py)?;
    Ok(rep.orders)
}

/// Torsion solution of `-Δ_p u - Δ_q u = rho` on (0,1) with n cells; returns (x, u).
#[pyfunction]
#[pyo3(signature = (n, rho, p, q))]
fn torsion(py: Python<'_>, n: usize, rho: f64, p: f64, q: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let mesh = Arc::new(Mesh::interval(0.0, 1.0, n).map_err(to_py)?);
    let params = ProblemParams::new(p, q, 0.5, 1.0).map_err(to_py)?;
    let u = py
        .detach(|| solve_torsion(&mesh, rho, &params, &EllipticConfig::default()))
        .map_err(to_py)?;
    let x = mesh.nodes().iter().map(|c| c[0]).collect();
    Ok((x, u.values().to_vec()))
}

#[pymodule]
fn pqflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("SolverError", py.get_type::<SolverError>())?;
    m.add("InvariantError", py.get_type::<InvariantError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(keys, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(torsion, m)?)?;
    Ok(())
}
