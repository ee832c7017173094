//! Python bindings: case files, the corrective dispatch, power flow,
//! episodes, value networks and the training harness.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use cascade_rl::agent::{ValueNet as CoreNet, ALPHAS, IDENTITY_ACTION};
use cascade_rl::cascade::{run_episode, AttackMode, EngineConfig, Environment as CoreEnv, TripMode};
use cascade_rl::harness::{self, stream_rng, HarnessError, RunConfig, Stream};
use cascade_rl::net_model::{connected_components, parse_case, write_case, Network as CaseNetwork};

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(json_to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, json_to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn harness_err(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Numerical { .. } => PyRuntimeError::new_err(e.to_string()),
        HarnessError::Output(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A power network read from the bundled case format.
#[pyclass(name = "Network", from_py_object)]
#[derive(Clone)]
struct Network {
    inner: CaseNetwork,
}

#[pymethods]
impl Network {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Network { inner: parse_case(text).map_err(value_err)? })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text =
            std::fs::read_to_string(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn to_text(&self) -> String {
        write_case(&self.inner)
    }

    #[getter]
    fn n_bus(&self) -> usize {
        self.inner.n_bus()
    }

    /// In-service branches.
    #[getter]
    fn n_branch(&self) -> usize {
        self.inner.n_branch()
    }

    #[getter]
    fn n_gen(&self) -> usize {
        self.inner.n_gen()
    }

    #[getter]
    fn n_load(&self) -> usize {
        self.inner.n_load()
    }

    /// Take a branch (by record position) out of service.
    fn trip(&mut self, branch: usize) -> PyResult<()> {
        let b = self.inner.branches.get_mut(branch).ok_or_else(|| value_err(format!("no branch {branch}")))?;
        b.in_service = false;
        Ok(())
    }

    /// Bus ids of each connected component.
    fn components(&self) -> Vec<Vec<u32>> {
        connected_components(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(buses={}, branches={}, generators={}, loads={})",
            self.inner.n_bus(),
            self.inner.n_branch(),
            self.inner.n_gen(),
            self.inner.n_load()
        )
    }
}

/// Corrective dispatch with flow limits scaled by `alpha`.
#[pyfunction]
#[pyo3(signature = (net, alpha = 1.0))]
fn run_dcopf<'py>(py: Python<'py>, net: &Network, alpha: f64) -> PyResult<Bound<'py, PyAny>> {
    let d = cascade_rl::run_dcopf(&net.inner, alpha).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &d)
}

/// Dispatch at `alpha`, then solve the AC power flow from a flat start.
#[pyfunction]
#[pyo3(signature = (net, alpha = 1.0))]
fn ac_power_flow<'py>(py: Python<'py>, net: &Network, alpha: f64) -> PyResult<Bound<'py, PyAny>> {
    let d = cascade_rl::run_dcopf(&net.inner, alpha).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    if !d.feasible {
        return Err(PyRuntimeError::new_err("dispatch is infeasible"));
    }
    to_py(py, &cascade_rl::ac_power_flow(&net.inner, &d))
}

/// Multi-stage episode environment over a solved base case.
#[pyclass(name = "Environment")]
struct Environment {
    inner: CoreEnv,
}

#[pymethods]
impl Environment {
    #[new]
    #[pyo3(signature = (net, stages = 3, generation_cap = 20, attack_mode = "uniform", worst_first = false))]
    fn new(
        net: &Network,
        stages: usize,
        generation_cap: usize,
        attack_mode: &str,
        worst_first: bool,
    ) -> PyResult<Self> {
        let attack_mode = match attack_mode {
            "uniform" => AttackMode::Uniform,
            "important" => AttackMode::Important,
            other => return Err(value_err(format!("unknown attack mode {other:?}"))),
        };
        let trip_mode = if worst_first { TripMode::WorstFirst } else { TripMode::All };
        let cfg = EngineConfig { stages, generation_cap, attack_mode, trip_mode };
        Ok(Environment { inner: CoreEnv::new(&net.inner, cfg).map_err(value_err)? })
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    /// State vector of the solved base case.
    fn base_state(&self) -> Vec<f64> {
        self.inner.base_state().values.clone()
    }

    /// Play one episode. `actions` gives the action index per stage (the
    /// identity action when omitted or exhausted).
    #[pyo3(signature = (seed = 0, actions = None, trace = false))]
    fn run_episode<'py>(
        &self,
        py: Python<'py>,
        seed: u64,
        actions: Option<Vec<usize>>,
        trace: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let actions = actions.unwrap_or_default();
        if let Some(&bad) = actions.iter().find(|&&a| a >= ALPHAS.len()) {
            return Err(value_err(format!("action {bad} is out of range")));
        }
        let mut stage = 0;
        let policy = |_: &_| {
            let a = actions.get(stage).copied().unwrap_or(IDENTITY_ACTION);
            stage += 1;
            a
        };
        let r = run_episode(&self.inner, policy, stream_rng(seed, Stream::Attack, 0))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let out = PyDict::new(py);
        out.set_item("won", r.won)?;
        out.set_item("total_reward", r.total_reward)?;
        out.set_item("stages_completed", r.stages_completed())?;
        out.set_item("stages", to_py(py, &r.stages)?)?;
        if trace {
            out.set_item("trace", to_py(py, &r.trace())?)?;
        }
        Ok(out.into_any())
    }
}

/// Action-value network over the ten flow-limit scales.
#[pyclass(name = "ValueNet", from_py_object)]
#[derive(Clone)]
struct ValueNet {
    inner: CoreNet,
}

#[pymethods]
impl ValueNet {
    #[staticmethod]
    #[pyo3(signature = (input_dim, seed = 0))]
    fn shallow(input_dim: usize, seed: u64) -> Self {
        ValueNet { inner: CoreNet::shallow(input_dim, &mut stream_rng(seed, Stream::Init, 0)) }
    }

    #[staticmethod]
    #[pyo3(signature = (input_dim, seed = 0))]
    fn deep(input_dim: usize, seed: u64) -> Self {
        ValueNet { inner: CoreNet::deep(input_dim, &mut stream_rng(seed, Stream::Init, 0)) }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(ValueNet { inner: CoreNet::load(&path).map_err(value_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn kind(&self) -> String {
        format!("{:?}", self.inner.kind()).to_lowercase()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    fn q_values(&self, state: Vec<f64>) -> PyResult<Vec<f64>> {
        if state.len() != self.inner.input_dim() {
            return Err(value_err(format!("expected {} inputs, got {}", self.inner.input_dim(), state.len())));
        }
        Ok(self.inner.q_values(&state))
    }

    fn params(&self) -> Vec<f64> {
        self.inner.params().to_vec()
    }
}

fn config_from(json: &str) -> PyResult<RunConfig> {
    RunConfig::from_json(json).map_err(harness_err)
}

/// Train from a JSON configuration; returns the run summary.
#[pyfunction]
fn train<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_from(config_json)?;
    let report = py.detach(|| harness::train(&cfg)).map_err(harness_err)?;
    to_py(py, &report.summary)
}

/// Greedy evaluation from a JSON configuration; returns the run summary.
#[pyfunction]
#[pyo3(signature = (config_json, checkpoint = None))]
fn evaluate<'py>(py: Python<'py>, config_json: &str, checkpoint: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_from(config_json)?;
    let report = py.detach(|| harness::evaluate(&cfg, checkpoint.as_deref())).map_err(harness_err)?;
    to_py(py, &report.summary)
}

/// Trailing moving average.
#[pyfunction]
fn moving_average(series: Vec<f64>, window: usize) -> PyResult<Vec<f64>> {
    harness::moving_average(&series, window).map_err(harness_err)
}

#[pymodule]
#[pyo3(name = "cascade_rl")]
pub fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ALPHAS", ALPHAS.to_vec())?;
    m.add("IDENTITY_ACTION", IDENTITY_ACTION)?;
    m.add_class::<Network>()?;
    m.add_class::<Environment>()?;
    m.add_class::<ValueNet>()?;
    m.add_function(wrap_pyfunction!(run_dcopf, m)?)?;
    m.add_function(wrap_pyfunction!(ac_power_flow, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(moving_average, m)?)?;
    Ok(())
}
