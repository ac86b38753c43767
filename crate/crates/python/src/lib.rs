//! Python bindings: load a star-schema warehouse, personalize it with a
//! preference profile and query it. Results come back as plain dicts.

use std::sync::Arc;

use pw_core::oracle::oracle_evaluate;
use pw_core::view::view_stats;
use pw_core::{
    build_view, evaluate, fixtures, load_schema, normalize_profile, parse_preference, parse_query, route, Dataset,
    Preference, QueryResult, Session, Target, ViewMode,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(pw_warehouse, WarehouseError, PyException);

fn err(e: pw_core::Error) -> PyErr {
    WarehouseError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

fn result_to_py<'py>(py: Python<'py>, r: &QueryResult) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &r.to_json())
}

fn parse_all(prefs: &[String]) -> PyResult<Vec<Preference>> {
    prefs.iter().map(|p| parse_preference(p).map_err(err)).collect()
}

#[pyclass(module = "pw_warehouse")]
struct Warehouse {
    dataset: Arc<Dataset>,
}

#[pymethods]
impl Warehouse {
    /// An empty warehouse from a schema JSON document.
    #[new]
    fn new(schema: &str) -> PyResult<Self> {
        Ok(Warehouse {
            dataset: Arc::new(load_schema(schema).map_err(err)?),
        })
    }

    /// The bundled eight-car example warehouse.
    #[staticmethod]
    fn cars_mini() -> Self {
        Warehouse {
            dataset: Arc::new(fixtures::cars_mini()),
        }
    }

    /// Appends CSV rows to a table; returns how many were added. Views
    /// built earlier become stale.
    fn ingest(&mut self, table: &str, csv: &str) -> PyResult<usize> {
        let mut next = Dataset::clone(&self.dataset);
        let rows = next.ingest(table, csv).map_err(err)?;
        self.dataset = Arc::new(next);
        Ok(rows)
    }

    #[getter]
    fn generation(&self) -> u64 {
        self.dataset.ingest_generation()
    }

    #[getter]
    fn fact_rows(&self) -> usize {
        self.dataset.fact.len()
    }

    /// Answers a query over the whole warehouse.
    fn query<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        let q = parse_query(text, &self.dataset).map_err(err)?;
        result_to_py(py, &evaluate(&q, &self.dataset, Target::Warehouse).map_err(err)?)
    }
}

/// A user's personalized handle on a warehouse.
#[pyclass(module = "pw_warehouse")]
struct View {
    warehouse: Py<Warehouse>,
    session: Session,
}

#[pymethods]
impl View {
    #[getter]
    fn profile_hash(&self) -> PyResult<String> {
        Ok(self.session.target_profile().map_err(err)?.profile_hash)
    }

    #[getter]
    fn fact_ids(&self) -> Vec<u32> {
        self.session.view().map(|v| v.fact_ids.clone()).unwrap_or_default()
    }

    /// Answers a query the way a personalized session would. Raises when the
    /// warehouse changed since the view was built.
    fn query<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        let ds = Arc::clone(&self.warehouse.borrow(py).dataset);
        let q = parse_query(text, &ds).map_err(err)?;
        result_to_py(py, &route(&q, &self.session, &ds).map_err(err)?)
    }

    /// Rebuilds the view against the current warehouse contents.
    fn rebuild(&mut self, py: Python<'_>) -> PyResult<()> {
        let ds = Arc::clone(&self.warehouse.borrow(py).dataset);
        let target = self.session.target_profile().map_err(err)?;
        let mode = self.session.view().map_or(ViewMode::Ids, |v| v.mode);
        if !target.is_empty() {
            let view = build_view(&ds, &target, mode).map_err(err)?;
            self.session.bind_view(Arc::new(view)).map_err(err)?;
        }
        Ok(())
    }

    /// Kept/total rows per dimension and the view's fact-row count.
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let ds = Arc::clone(&self.warehouse.borrow(py).dataset);
        match self.session.view() {
            Some(v) => to_py(py, &serde_json::to_value(view_stats(v, &ds)).expect("stats serialize")),
            None => Ok(py.None().into_bound(py)),
        }
    }
}

/// Builds a personalized view of `warehouse` for `user_id` from preferences
/// such as `"Car.year > 2007"`, highest priority first.
#[pyfunction]
#[pyo3(signature = (warehouse, user_id, preferences, degree = 1.0, mode = "ids"))]
fn personalize(
    py: Python<'_>,
    warehouse: Py<Warehouse>,
    user_id: &str,
    preferences: Vec<String>,
    degree: f64,
    mode: &str,
) -> PyResult<View> {
    let mode: ViewMode = mode.parse().map_err(WarehouseError::new_err)?;
    let (profile, _) = normalize_profile(user_id, parse_all(&preferences)?);
    let ds = Arc::clone(&warehouse.borrow(py).dataset);
    profile.check(&ds).map_err(err)?;
    let mut session = Session::new(user_id);
    session.set_profile(Some(profile));
    session.set_degree(degree).map_err(err)?;
    let target = session.target_profile().map_err(err)?;
    if !target.is_empty() {
        let view = build_view(&ds, &target, mode).map_err(err)?;
        session.bind_view(Arc::new(view)).map_err(err)?;
    }
    Ok(View { warehouse, session })
}

/// Brute-force reference answer for `text` under `preferences`.
#[pyfunction]
fn oracle_query<'py>(
    py: Python<'py>,
    warehouse: &Warehouse,
    preferences: Vec<String>,
    text: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let q = parse_query(text, &warehouse.dataset).map_err(err)?;
    let prefs = parse_all(&preferences)?;
    result_to_py(py, &oracle_evaluate(&q, &prefs, &warehouse.dataset).map_err(err)?)
}

/// Canonical text of a preference.
#[pyfunction(name = "parse_preference")]
fn canonical_preference(text: &str) -> PyResult<String> {
    Ok(parse_preference(text).map_err(err)?.text())
}

#[pymodule]
fn pw_warehouse(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Warehouse>()?;
    m.add_class::<View>()?;
    m.add_function(wrap_pyfunction!(personalize, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_query, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_preference, m)?)?;
    m.add("WarehouseError", m.py().get_type::<WarehouseError>())?;
    Ok(())
}
