//! Python bindings. Runs are opaque `Run` objects; reports, certificates and
//! operations come back as plain dicts and lists.

use linchain::model::Node;
use linchain::sim::{AdversarySpec, InvocationPlan};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyTuple;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts a serializable value to Python objects through its JSON form.
fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn node((p, t): (usize, usize)) -> Node {
    Node::new(p, t)
}

#[pyclass(name = "Run", module = "linchain_py", frozen)]
struct PyRun {
    inner: linchain::Run,
}

#[pymethods]
impl PyRun {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: linchain::trace::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        linchain::trace::to_json(&self.inner).map_err(err)
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.config.n
    }

    #[getter]
    fn protocol(&self) -> String {
        self.inner.config.protocol.clone()
    }

    #[getter]
    fn seed(&self) -> Option<u64> {
        self.inner.seed
    }

    #[getter]
    fn quiescent(&self) -> bool {
        self.inner.quiescent
    }

    fn digest(&self) -> PyResult<String> {
        linchain::trace::digest(&self.inner).map_err(err)
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let protocol = linchain::by_name(&self.inner.config).map_err(err)?;
        to_py(py, &linchain::validate_run(&self.inner, &protocol))
    }

    fn operations<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &linchain::extract_operations(&self.inner).map_err(err)?)
    }

    #[pyo3(signature = (bound = linchain::linearize::DEFAULT_SEARCH_BOUND))]
    fn check_linearizable<'py>(&self, py: Python<'py>, bound: usize) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &linchain::linearize::find_linearization_with(&self.inner, bound).map_err(err)?)
    }

    #[pyo3(signature = (f = None))]
    fn audit<'py>(&self, py: Python<'py>, f: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
        let f = f.unwrap_or(self.inner.config.f);
        to_py(py, &linchain::audit(&self.inner, f).map_err(err)?)
    }

    /// Refutes every finding of the audit; returns a list of
    /// `(refutation dict, Run or None)`.
    #[pyo3(signature = (f = None))]
    fn refute<'py>(&self, py: Python<'py>, f: Option<usize>) -> PyResult<Vec<Bound<'py, PyTuple>>> {
        let f = f.unwrap_or(self.inner.config.f);
        let report = linchain::audit(&self.inner, f).map_err(err)?;
        report
            .findings()
            .iter()
            .map(|finding| {
                let r = linchain::refute(&self.inner, finding).map_err(err)?;
                let run = r.run.clone().map(|inner| PyRun { inner });
                let mut doc = serde_json::to_value(&r).map_err(err)?;
                doc["refuted"] = serde_json::Value::Bool(r.refuted());
                PyTuple::new(py, [to_py(py, &doc)?, run.into_pyobject(py)?.into_any()])
            })
            .collect()
    }

    fn happens_before(&self, a: (usize, usize), b: (usize, usize)) -> PyResult<bool> {
        let index = linchain::build_index(&self.inner).map_err(err)?;
        Ok(index.happens_before(node(a), node(b)))
    }

    /// Cut times of the past of `pivot`: `(j, l)` is in the past iff `l < cut[j]`.
    fn past_frontier(&self, pivot: (usize, usize)) -> PyResult<Vec<usize>> {
        let index = linchain::build_index(&self.inner).map_err(err)?;
        Ok(index.past_frontier(node(pivot)).map_err(err)?.cut)
    }

    fn delay_future<'py>(&self, py: Python<'py>, pivot: (usize, usize), delta: usize) -> PyResult<(PyRun, Bound<'py, PyAny>)> {
        let (run, cert) = linchain::delay_future(&self.inner, node(pivot), delta).map_err(err)?;
        Ok((PyRun { inner: run }, to_py(py, &cert)?))
    }

    /// Moves operation `y` (`"p.k"`) ahead of operation `x`.
    fn reorder<'py>(&self, py: Python<'py>, x: &str, y: &str) -> PyResult<(PyRun, Bound<'py, PyAny>)> {
        let (x, y) = (x.parse().map_err(err)?, y.parse().map_err(err)?);
        let (run, cert) = linchain::reorder_operations(&self.inner, x, y).map_err(err)?;
        Ok((PyRun { inner: run }, to_py(py, &cert)?))
    }

    fn locally_equivalent(&self, other: &PyRun) -> PyResult<bool> {
        linchain::locally_equivalent(&self.inner, &other.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Run(protocol={:?}, n={}, horizon={}, seed={:?})",
            self.inner.config.protocol,
            self.inner.config.n,
            self.inner.horizon(),
            self.inner.seed
        )
    }
}

/// Simulates one seed. `adversary` is an adversary document as a JSON
/// string; by default processes move and messages arrive at random, random
/// operations are invoked until round 60, and the run is driven to
/// quiescence.
#[pyfunction]
#[pyo3(signature = (protocol, n, f, horizon, seed, adversary = None))]
fn simulate(protocol: &str, n: usize, f: usize, horizon: usize, seed: u64, adversary: Option<&str>) -> PyResult<PyRun> {
    let config = linchain::SystemConfig::new(n, f, protocol).map_err(err)?;
    let spec = linchain::by_name(&config).map_err(err)?;
    let adversary = match adversary {
        Some(text) => serde_json::from_str::<AdversarySpec>(text).map_err(err)?,
        None => AdversarySpec::default()
            .with_invocations(InvocationPlan::Random {
                percent: 20,
                until: 60,
                max_ops: 2 * n,
                read_percent: 50,
            })
            .quiescing(),
    };
    Ok(PyRun {
        inner: linchain::simulate(&config, &spec, &adversary, horizon, seed).map_err(err)?,
    })
}

#[pyfunction]
fn shift(m: usize, t_j: usize, delta: usize) -> usize {
    linchain::shift(m, t_j, delta)
}

#[pymodule]
fn linchain_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(shift, m)?)?;
    Ok(())
}
