//! Python bindings. Configs travel as JSON strings in the same schema the
//! command line reads; reports come back as JSON strings.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pollsim::analysis::{self, SystemRates};
use pollsim::engine::{run_with, RunOptions};
use pollsim::error::OracleError;
use pollsim::oracle;
use pollsim::{PolicyParams, Queue, System, SystemConfig};

fn invalid(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn queue(side: u8) -> PyResult<Queue> {
    Queue::from_number(side).ok_or_else(|| invalid(format!("queue must be 1 or 2, got {side}")))
}

fn load(config_json: &str) -> PyResult<(SystemConfig, System)> {
    let cfg = SystemConfig::from_json(config_json).map_err(invalid)?;
    let sys = cfg.resolve().map_err(invalid)?;
    Ok((cfg, sys))
}

/// Eight-coefficient two-phase switching policy.
#[pyclass(name = "Policy", module = "pollsim", from_py_object)]
#[derive(Clone)]
struct PyPolicy {
    inner: PolicyParams,
}

#[pymethods]
impl PyPolicy {
    #[new]
    #[pyo3(signature = (alpha_b=(0.0, 0.0), beta_b=(0.0, 0.0), alpha_c=(0.0, 0.0), beta_c=(0.0, 0.0)))]
    fn new(alpha_b: (f64, f64), beta_b: (f64, f64), alpha_c: (f64, f64), beta_c: (f64, f64)) -> PyResult<Self> {
        let inner = PolicyParams {
            alpha_b: [alpha_b.0, alpha_b.1],
            beta_b: [beta_b.0, beta_b.1],
            alpha_c: [alpha_c.0, alpha_c.1],
            beta_c: [beta_c.0, beta_c.1],
        };
        inner.validate().map_err(invalid)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn exhaustive() -> Self {
        Self {
            inner: PolicyParams::exhaustive(),
        }
    }

    #[staticmethod]
    fn priority_factor(alpha1: f64, alpha2: f64) -> PyResult<Self> {
        Ok(Self {
            inner: PolicyParams::priority_factor(alpha1, alpha2).map_err(invalid)?,
        })
    }

    /// Exhaustive at `side`, priority factor `alpha` at the other queue.
    #[staticmethod]
    fn mixed_exhaustive(side: u8, alpha: f64) -> PyResult<Self> {
        Ok(Self {
            inner: PolicyParams::mixed_exhaustive(queue(side)?, alpha).map_err(invalid)?,
        })
    }

    #[staticmethod]
    fn robust_threshold(trigger_b1: f64, trigger_b2: f64, drain_c1: f64, drain_c2: f64) -> PyResult<Self> {
        Ok(Self {
            inner: PolicyParams::robust_threshold(trigger_b1, trigger_b2, drain_c1, drain_c2).map_err(invalid)?,
        })
    }

    #[getter]
    fn alpha_b(&self) -> (f64, f64) {
        (self.inner.alpha_b[0], self.inner.alpha_b[1])
    }

    #[getter]
    fn beta_b(&self) -> (f64, f64) {
        (self.inner.beta_b[0], self.inner.beta_b[1])
    }

    #[getter]
    fn alpha_c(&self) -> (f64, f64) {
        (self.inner.alpha_c[0], self.inner.alpha_c[1])
    }

    #[getter]
    fn beta_c(&self) -> (f64, f64) {
        (self.inner.beta_c[0], self.inner.beta_c[1])
    }

    fn in_stable_class(&self) -> bool {
        self.inner.in_stable_class()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("serializable")
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "Policy(alpha_b={:?}, beta_b={:?}, alpha_c={:?}, beta_c={:?})",
            p.alpha_b, p.beta_b, p.alpha_c, p.beta_c
        )
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

/// `(theta1*, theta2*, psi*)` for the given loads, mean switchover times
/// and policy.
#[pyfunction]
fn theta_star(rho: (f64, f64), s: (f64, f64), policy: &PyPolicy) -> PyResult<(f64, f64, f64)> {
    let rates = SystemRates::new(1.0, [rho.0, rho.1], [s.0, s.1]);
    let f = analysis::theta_star(&rates, &policy.inner).map_err(runtime)?;
    Ok((f.theta[0], f.theta[1], f.psi))
}

/// Expected one-cycle change of the Lyapunov function from Palm state `x`.
#[pyfunction]
fn drift(x: (f64, f64), rho: (f64, f64), s: (f64, f64), policy: &PyPolicy) -> PyResult<f64> {
    let rates = SystemRates::new(1.0, [rho.0, rho.1], [s.0, s.1]);
    Ok(analysis::drift([x.0, x.1], &rates, &policy.inner).map_err(runtime)?.delta_v)
}

/// Stability report of a JSON config, as JSON.
#[pyfunction]
fn analyze(config_json: &str) -> PyResult<String> {
    let (_, sys) = load(config_json)?;
    let report = analysis::stability_report(&sys.rates(), &sys.policy);
    Ok(serde_json::to_string(&report).expect("serializable"))
}

/// Simulation output of a JSON config, as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, seed=None, replicate=0))]
fn simulate(py: Python<'_>, config_json: &str, seed: Option<u64>, replicate: u64) -> PyResult<String> {
    let (_, mut sys) = load(config_json)?;
    if let Some(s) = seed {
        sys.seed = s;
    }
    let out = py
        .detach(|| run_with(&sys, RunOptions { replicate, trace: false }))
        .map_err(runtime)?;
    Ok(serde_json::to_string(&out).expect("serializable"))
}

/// Exact `(E[N1], E[N2])` of the truncated CTMC.
#[pyfunction]
#[pyo3(signature = (config_json, cap=40))]
fn oracle_means(py: Python<'_>, config_json: &str, cap: u64) -> PyResult<(f64, f64)> {
    let (_, sys) = load(config_json)?;
    let sol = py.detach(|| oracle::solve(&sys, cap)).map_err(|e| match e {
        OracleError::NotExponential(_) | OracleError::CapTooSmall { .. } => invalid(e),
        other => runtime(other),
    })?;
    Ok((sol.en1, sol.en2))
}

#[pymodule]
#[pyo3(name = "pollsim")]
fn pollsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(theta_star, m)?)?;
    m.add_function(wrap_pyfunction!(drift, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_means, m)?)?;
    Ok(())
}
