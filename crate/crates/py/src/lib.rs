//! Python bindings. Grids, traces and reports cross the boundary as the
//! same JSON documents the `gcf-lab` binary writes.

use gcf_core::barriers::{barrier_eval, domain_preservation, sample_grid, verify_supersolution, BarrierSpec};
use gcf_core::doubling::{approximation_suite, SuiteConfig};
use gcf_core::estimates::{monitor_all, CutoffParams};
use gcf_core::io::{trace_csv as csv_of, trace_from_json, trace_to_json};
use gcf_core::oracles::{soliton_solve, sphere_radius as radius_of};
use gcf_core::presets::Preset;
use gcf_core::{run, BoundaryCondition, FlowParams, GcfError, GraphFunction};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: GcfError) -> PyErr {
    match e {
        GcfError::NonConvex { .. }
        | GcfError::CurvatureBlowup { .. }
        | GcfError::StiffnessFailure { .. }
        | GcfError::NoBlowupDetected { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("bad {what} JSON: {e}")))
}

fn dump<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Radius at time `t` of the sphere of initial radius `r0` in `R^{n+1}`.
#[pyfunction]
fn sphere_radius(r0: f64, n: usize, alpha: f64, t: f64) -> PyResult<f64> {
    radius_of(r0, n, alpha, t).map_err(err)
}

/// Builds named initial data, e.g. `{"preset": "hemisphere", "n": 2, "h": 0.01,
/// "r_max": 0.5, "radius": 1.0}`; returns the grid as JSON.
#[pyfunction]
fn build_preset(spec: &str) -> PyResult<String> {
    let p: Preset = parse("preset", spec)?;
    dump(&p.build().map_err(err)?)
}

/// Evolves `u0` (grid JSON) to `t_end` and returns the trace JSON. `boundary`
/// is a JSON object such as `{"kind": "frozen"}`. Solver aborts raise
/// `RuntimeError`.
#[pyfunction]
#[pyo3(signature = (u0, alpha, t_end, times=Vec::new(), boundary=None))]
fn run_flow(py: Python<'_>, u0: &str, alpha: f64, t_end: f64, times: Vec<f64>, boundary: Option<&str>) -> PyResult<String> {
    let u: GraphFunction = parse("grid", u0)?;
    let mut params = FlowParams::new(u.dim(), alpha, t_end);
    if let Some(b) = boundary {
        params = params.with_boundary(parse::<BoundaryCondition>("boundary", b)?);
    }
    params.validate(&u).map_err(err)?;
    let trace = py.detach(|| run(&u, &params, &times));
    if let Some(f) = &trace.failure {
        return Err(PyRuntimeError::new_err(format!("solver aborted at t = {}: {}", f.t, f.message)));
    }
    trace_to_json(&trace).map_err(err)
}

/// CSV export `t,x[,y],u,K,H,lambda_min,upsilon` of a trace.
#[pyfunction]
fn trace_csv(trace: &str) -> PyResult<String> {
    Ok(csv_of(&trace_from_json(trace).map_err(err)?))
}

/// Gradient, curvature and speed monitors; JSON list of reports.
#[pyfunction]
#[pyo3(signature = (trace, m=1.0, beta=0.5))]
fn monitor(trace: &str, m: f64, beta: f64) -> PyResult<String> {
    let tr = trace_from_json(trace).map_err(err)?;
    dump(&monitor_all(&tr, &CutoffParams::new(m, beta)).map_err(err)?)
}

/// Return value of [`soliton`].
type SolitonTuple = (Vec<f64>, Vec<f64>, Option<f64>, f64);

/// Translating soliton profile: `(heights, slopes, blowup_radius, residual)`.
#[pyfunction]
#[pyo3(signature = (n, alpha, c, r_max=10.0, h=5e-3, tol=1e-10))]
fn soliton(n: usize, alpha: f64, c: f64, r_max: f64, h: f64, tol: f64) -> PyResult<SolitonTuple> {
    let p = soliton_solve(n, alpha, c, r_max, h, tol).map_err(err)?;
    Ok((p.heights, p.slopes, p.blowup_radius, p.residual))
}

/// Barrier radius `f(h, t)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn barrier_value(n: usize, alpha: f64, r0: f64, delta: f64, m: f64, t0: f64, h: f64, t: f64) -> PyResult<f64> {
    let spec = BarrierSpec::new(n, alpha, r0, delta, m, t0).map_err(err)?;
    barrier_eval(&spec, h, t).map_err(err)
}

/// Smallest supersolution margins `(k, upsilon, speed)` over a `count^2` sample grid.
#[pyfunction]
#[pyo3(signature = (n, alpha, r0, delta, m, t0, count=100))]
fn barrier_margins(n: usize, alpha: f64, r0: f64, delta: f64, m: f64, t0: f64, count: usize) -> PyResult<(f64, f64, f64)> {
    let spec = BarrierSpec::new(n, alpha, r0, delta, m, t0).map_err(err)?;
    let (hs, ts) = sample_grid(&spec, count);
    let mg = verify_supersolution(&spec, &hs, &ts).map_err(err)?;
    Ok((mg.k_margin, mg.upsilon_margin, mg.speed_margin))
}

/// Domain-preservation verdict of a trace, as JSON.
#[pyfunction]
fn preservation(trace: &str, r0: f64, t0: f64, delta_list: Vec<f64>) -> PyResult<String> {
    let tr = trace_from_json(trace).map_err(err)?;
    domain_preservation(&tr, r0, t0, &delta_list).map_err(err)?.to_json().map_err(err)
}

/// Runs the closed-curve approximation suite on planar data; `config` is a
/// JSON object overriding fields of the default suite configuration.
#[pyfunction]
#[pyo3(signature = (u0, config=None))]
fn doubling_suite(py: Python<'_>, u0: &str, config: Option<&str>) -> PyResult<String> {
    let u: GraphFunction = parse("grid", u0)?;
    let mut base = serde_json::to_value(SuiteConfig::default()).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(c) = config {
        let over: serde_json::Value = parse("config", c)?;
        let Some(obj) = over.as_object() else {
            return Err(PyValueError::new_err("config must be a JSON object"));
        };
        for (k, v) in obj {
            base[k] = v.clone();
        }
    }
    let cfg: SuiteConfig = serde_json::from_value(base).map_err(|e| PyValueError::new_err(format!("bad config: {e}")))?;
    let out = py.detach(|| approximation_suite(&u, &cfg)).map_err(err)?;
    out.report.to_json().map_err(err)
}

#[pymodule]
fn gcf_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sphere_radius, m)?)?;
    m.add_function(wrap_pyfunction!(build_preset, m)?)?;
    m.add_function(wrap_pyfunction!(run_flow, m)?)?;
    m.add_function(wrap_pyfunction!(trace_csv, m)?)?;
    m.add_function(wrap_pyfunction!(monitor, m)?)?;
    m.add_function(wrap_pyfunction!(soliton, m)?)?;
    m.add_function(wrap_pyfunction!(barrier_value, m)?)?;
    m.add_function(wrap_pyfunction!(barrier_margins, m)?)?;
    m.add_function(wrap_pyfunction!(preservation, m)?)?;
    m.add_function(wrap_pyfunction!(doubling_suite, m)?)?;
    Ok(())
}
