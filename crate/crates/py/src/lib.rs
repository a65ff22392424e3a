//! Python bindings. Problems are passed as JSON config strings with the same
//! schema the `mcn` binary reads; results come back as plain dicts and lists.

use mcn_codesign::cli::{candidates, rate_report_for, solution_file};
use mcn_codesign::config::{self, Overrides, Resolved};
use mcn_codesign::error::Error;
use mcn_codesign::network::{self, ComputationalModel};
use mcn_codesign::optimize::{self, NetworkWeights};
use mcn_codesign::poly::Polynomial;
use mcn_codesign::report::{network_report, SolutionFile};
use mcn_codesign::scheduler::{plateau_start, rate_sweep, schedule_search as search};
use mcn_codesign::synthesis::{step_response, StepResponse};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use serde_json::json;

create_exception!(pymcn, McnError, PyException);
create_exception!(pymcn, ConfigError, McnError);
create_exception!(pymcn, InfeasibleError, McnError);
create_exception!(pymcn, BudgetExceededError, McnError);

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.exit_code() {
        2 => InfeasibleError::new_err(msg),
        3 => BudgetExceededError::new_err(msg),
        4 => ConfigError::new_err(msg),
        _ => McnError::new_err(msg),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| McnError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn resolve(config: &str, model: Option<u8>) -> PyResult<Resolved> {
    let (cfg, raw) = config::parse(config).map_err(err)?;
    config::resolve(cfg, &raw, Overrides { model, max_period: None }).map_err(err)
}

fn trace(resp: &StepResponse, amplitude: f64) -> serde_json::Value {
    let e: Vec<f64> = resp.y.iter().map(|y| amplitude - y).collect();
    json!({ "k": (0..resp.y.len()).collect::<Vec<_>>(), "u": resp.u, "y": resp.y, "e": e })
}

/// Polynomial in `z` with ascending coefficients.
#[pyclass(name = "Polynomial", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPolynomial(Polynomial);

#[pymethods]
impl PyPolynomial {
    #[new]
    fn new(coeffs: Vec<f64>) -> Self {
        PyPolynomial(Polynomial::new(coeffs))
    }

    #[staticmethod]
    fn from_roots(roots: Vec<f64>) -> Self {
        PyPolynomial(Polynomial::from_real_roots(&roots))
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.0.coeffs().to_vec()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.0.degree()
    }

    fn __call__(&self, x: f64) -> f64 {
        self.0.eval(x)
    }

    fn roots(&self) -> Vec<Complex64> {
        self.0.roots()
    }

    fn derivative(&self) -> Self {
        PyPolynomial(self.0.derivative())
    }

    fn __add__(&self, o: PyRef<'_, Self>) -> Self {
        PyPolynomial(&self.0 + &o.0)
    }

    fn __sub__(&self, o: PyRef<'_, Self>) -> Self {
        PyPolynomial(&self.0 - &o.0)
    }

    fn __mul__(&self, o: PyRef<'_, Self>) -> Self {
        PyPolynomial(&self.0 * &o.0)
    }

    fn __eq__(&self, o: PyRef<'_, Self>) -> bool {
        self.0 == o.0
    }

    fn __repr__(&self) -> String {
        format!("Polynomial({:?})", self.0.coeffs())
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }
}

/// sha256 of the canonical config, as stored in solution files.
#[pyfunction]
fn config_hash(config: &str) -> PyResult<String> {
    let (_, raw) = config::parse(config).map_err(err)?;
    Ok(config::config_hash(&raw))
}

/// Transfer functions, delays and rates of networks with fixed weights.
#[pyfunction]
fn analyze(py: Python<'_>, config: &str) -> PyResult<Py<PyAny>> {
    let r = resolve(config, None)?;
    let p = &r.problem;
    let mut out = serde_json::Map::new();
    for (obs, key) in [(false, "controllability"), (true, "observability")] {
        let net = match (obs, &p.observability) {
            (false, _) => &p.controllability,
            (true, Some(o)) => o,
            (true, None) => continue,
        };
        let NetworkWeights::Fixed(w) = &net.weights else {
            return Err(ConfigError::new_err(format!("/{key}/weights: analyze needs fixed weights")));
        };
        let rep = network_report(&net.graph, &net.schedule, w, rate_report_for(p, obs).map_err(err)?).map_err(err)?;
        out.insert(key.into(), serde_json::to_value(rep).map_err(|e| McnError::new_err(e.to_string()))?);
    }
    to_py(py, &out)
}

/// Design controller and weights. Returns the solution, a replayable
/// solution file and the step trace.
#[pyfunction]
#[pyo3(signature = (config, model = None, horizon = None))]
fn codesign(py: Python<'_>, config: &str, model: Option<u8>, horizon: Option<usize>) -> PyResult<Py<PyAny>> {
    let r = resolve(config, model)?;
    let p = &r.problem;
    let sol = py.detach(|| optimize::codesign(p)).map_err(err)?;
    let ev = optimize::evaluate(p, &sol.controller, &sol.weights_r, sol.weights_o.as_ref()).map_err(err)?;
    let h = horizon.or(r.horizon).unwrap_or(sol.metrics.l + 10);
    let resp = step_response(&ev.closed_loop, p.amplitude, h).map_err(err)?;
    to_py(
        py,
        &json!({
            "feasible": sol.feasible(),
            "solution": sol,
            "solution_file": solution_file(&r, p, &sol),
            "trace": trace(&resp, p.amplitude),
        }),
    )
}

/// Rank the configured candidate schedules; optionally sweep rate bounds.
#[pyfunction]
#[pyo3(signature = (config, rate_bounds = None))]
fn schedule_search(py: Python<'_>, config: &str, rate_bounds: Option<Vec<f64>>) -> PyResult<Py<PyAny>> {
    let r = resolve(config, None)?;
    let cands = candidates(&r).map_err(err)?;
    let (res, sweep) = py
        .detach(|| -> mcn_codesign::error::Result<_> {
            let res = search(&r.problem, &cands, None)?;
            let sweep = match &rate_bounds {
                Some(b) => Some(rate_sweep(&r.problem, &cands, b)?),
                None => None,
            };
            Ok((res, sweep))
        })
        .map_err(err)?;
    let plateau = sweep.as_ref().map(|s| {
        s.iter()
            .map(|(n, pts)| (n.clone(), plateau_start(pts, mcn_codesign::cli::PLATEAU_REL_TOL, mcn_codesign::cli::PLATEAU_RUN)))
            .collect::<std::collections::BTreeMap<_, _>>()
    });
    to_py(py, &json!({ "ranking": res.ranking, "optimal_set": res.optimal_set, "sweep": sweep, "plateau_hz": plateau }))
}

/// Replay a solution file (as returned by `codesign`) against its config.
#[pyfunction]
#[pyo3(signature = (config, solution, horizon = None))]
fn simulate(py: Python<'_>, config: &str, solution: &str, horizon: Option<usize>) -> PyResult<Py<PyAny>> {
    let r = resolve(config, None)?;
    let sf: SolutionFile = serde_json::from_str(solution).map_err(|e| ConfigError::new_err(e.to_string()))?;
    if sf.config_hash != r.hash {
        return Err(ConfigError::new_err("solution was produced for a different configuration"));
    }
    let mut p = r.problem.clone();
    p.model = ComputationalModel::from_index(sf.model).ok_or_else(|| ConfigError::new_err("bad model"))?;
    p.controllability.schedule = sf.schedule_r.clone();
    if let (Some(o), Some(s)) = (p.observability.as_mut(), &sf.schedule_o) {
        o.schedule = s.clone();
    }
    let ev = optimize::evaluate(&p, &sf.controller, &sf.weights_r, sf.weights_o.as_ref()).map_err(err)?;
    let h = horizon.or(r.horizon).unwrap_or(ev.closed_loop.l + 10);
    if h < ev.closed_loop.l {
        return Err(ConfigError::new_err(format!("horizon {h} is shorter than the response time {}", ev.closed_loop.l)));
    }
    let resp = step_response(&ev.closed_loop, p.amplitude, h).map_err(err)?;
    to_py(py, &json!({ "metrics": ev.metrics, "trace": trace(&resp, p.amplitude) }))
}

/// Bits per sample `ceil(log2(2 U |alpha| / (delta |alpha_min|)))`.
#[pyfunction]
fn ceil_log2_rate(delta: f64, max_value: f64, alpha: f64, alpha_min: f64) -> PyResult<i64> {
    if !(delta > 0.0 && max_value > 0.0 && alpha != 0.0 && alpha_min != 0.0) {
        return Err(PyValueError::new_err("delta and max_value must be positive and alphas non-zero"));
    }
    Ok(network::ceil_log2_rate(delta, max_value, alpha, alpha_min))
}

#[pymodule]
fn pymcn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("McnError", py.get_type::<McnError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("InfeasibleError", py.get_type::<InfeasibleError>())?;
    m.add("BudgetExceededError", py.get_type::<BudgetExceededError>())?;
    m.add_class::<PyPolynomial>()?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(codesign, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_search, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(ceil_log2_rate, m)?)?;
    Ok(())
}
