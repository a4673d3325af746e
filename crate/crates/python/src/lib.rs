//! Python bindings.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vaxdyn::bifurcation::{bifurcation_coefficients, critical_beta as beta_star};
use vaxdyn::equilibrium::endemic_equilibria;
use vaxdyn::model::COMPARTMENTS;
use vaxdyn::ode::{integrate, IntegratorConfig};
use vaxdyn::sensitivity::sensitivity_table;
use vaxdyn::threshold::disease_free_equilibrium;
use vaxdyn::{Error, ParamName, State};

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        2 | 4 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn name(key: &str) -> PyResult<ParamName> {
    ParamName::from_key(key).ok_or_else(|| PyKeyError::new_err(format!("unknown parameter `{key}`")))
}

/// Model parameters; defaults to the fitted values.
#[pyclass(name = "Params", skip_from_py_object)]
#[derive(Clone)]
pub struct PyParams {
    inner: vaxdyn::Params,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = vaxdyn::Params::fitted();
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                inner.set(name(&key)?, v.extract()?);
            }
        }
        inner.validate().map_err(to_py)?;
        Ok(PyParams { inner })
    }

    /// Literature starting values used before fitting.
    #[staticmethod]
    fn initial_estimates() -> Self {
        PyParams {
            inner: vaxdyn::Params::initial_estimates(),
        }
    }

    fn get(&self, key: &str) -> PyResult<f64> {
        Ok(self.inner.get(name(key)?))
    }

    /// Copy with one parameter replaced.
    fn with_value(&self, key: &str, value: f64) -> PyResult<Self> {
        let inner = self.inner.with(name(key)?, value);
        inner.validate().map_err(to_py)?;
        Ok(PyParams { inner })
    }

    fn to_dict(&self) -> BTreeMap<&'static str, f64> {
        ParamName::ALL.iter().map(|n| (n.key(), self.inner.get(*n))).collect()
    }

    fn __repr__(&self) -> String {
        let body: Vec<String> = ParamName::ALL
            .iter()
            .map(|n| format!("{}={}", n.key(), self.inner.get(*n)))
            .collect();
        format!("Params({})", body.join(", "))
    }
}

fn state(values: Vec<f64>) -> PyResult<State> {
    let array: [f64; COMPARTMENTS] = values
        .try_into()
        .map_err(|_| PyValueError::new_err("a state has 8 compartments: S, V, A, I, A1, I1, Q, R"))?;
    Ok(State::from_array(array, 0.0))
}

/// Reproduction number and its four contributions.
#[pyfunction]
fn r0(params: PyRef<'_, PyParams>) -> BTreeMap<&'static str, f64> {
    let r = vaxdyn::threshold::r0(&params.inner);
    BTreeMap::from([
        ("r0", r.r0),
        ("r_a", r.r_a),
        ("r_i", r.r_i),
        ("r_a1", r.r_a1),
        ("r_i1", r.r_i1),
    ])
}

/// Disease-free equilibrium as `[S, V, A, I, A1, I1, Q, R]`.
#[pyfunction]
fn dfe(params: PyRef<'_, PyParams>) -> Vec<f64> {
    disease_free_equilibrium(&params.inner).to_array().to_vec()
}

/// Contact rate at which the reproduction number equals one.
#[pyfunction]
fn critical_beta(params: PyRef<'_, PyParams>) -> PyResult<f64> {
    beta_star(&params.inner).map_err(to_py)
}

/// Integrates from `initial` and returns `(times, states)`.
#[pyfunction]
#[pyo3(signature = (params, initial, t_end, stride = 1.0, rel_tol = 1e-8))]
fn simulate(
    params: PyRef<'_, PyParams>,
    initial: Vec<f64>,
    t_end: f64,
    stride: f64,
    rel_tol: f64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let start = state(initial)?;
    let config = IntegratorConfig::default().with_stride(stride).with_rel_tol(rel_tol);
    let traj = integrate(&start, &params.inner, t_end, &config).map_err(to_py)?;
    let states = traj.states.iter().map(|s| s.to_array().to_vec()).collect();
    Ok((traj.times, states))
}

/// Feasible endemic equilibria as dictionaries with `lambda_star`, `state` and `residual`.
#[pyfunction]
fn equilibria(py: Python<'_>, params: PyRef<'_, PyParams>) -> PyResult<Vec<Py<PyDict>>> {
    endemic_equilibria(&params.inner)
        .map_err(to_py)?
        .into_iter()
        .map(|e| {
            let d = PyDict::new(py);
            d.set_item("lambda_star", e.lambda_star)?;
            d.set_item("state", e.state.to_array().to_vec())?;
            d.set_item("residual", e.residual)?;
            Ok(d.unbind())
        })
        .collect()
}

/// Centre-manifold coefficients at the threshold.
#[pyfunction]
fn bifurcation(py: Python<'_>, params: PyRef<'_, PyParams>) -> PyResult<Py<PyDict>> {
    let b = bifurcation_coefficients(&params.inner).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("beta_star", b.beta_star)?;
    d.set_item("a", b.a_coeff)?;
    d.set_item("b", b.b_coeff)?;
    d.set_item("direction", b.direction.as_str())?;
    Ok(d.unbind())
}

/// Rows `(param, value, gamma, epsilon)` of local sensitivity indices.
#[pyfunction]
fn sensitivity(params: PyRef<'_, PyParams>) -> PyResult<Vec<(&'static str, f64, f64, f64)>> {
    Ok(sensitivity_table(&params.inner)
        .map_err(to_py)?
        .into_iter()
        .map(|r| (r.param.key(), r.value, r.gamma, r.epsilon))
        .collect())
}

#[pymodule]
fn vaxdyn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(r0, m)?)?;
    m.add_function(wrap_pyfunction!(dfe, m)?)?;
    m.add_function(wrap_pyfunction!(critical_beta, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(equilibria, m)?)?;
    m.add_function(wrap_pyfunction!(bifurcation, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity, m)?)?;
    Ok(())
}
