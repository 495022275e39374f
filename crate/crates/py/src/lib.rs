//! Python bindings: workspaces, behavior specs and the rate arithmetic.
//! Documents cross the boundary as plain dicts and lists.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyFloat, PyInt, PyString};
use riskcore::dsl::{parse_spec, serialize_spec, BehaviorSpec as CoreSpec};
use riskcore::estimation::{self, FleetExposure};
use riskcore::hazard_log::Stamp;
use riskcore::inference::{derive_catalog, infer_from};
use riskcore::ontology::{validate_model, MeasureProposal, RiskValue, SeverityClass};
use riskcore::quantity::{EventsPerHour, EventsPerYear, Exact, HoursPerYear, Probability};
use riskcore::rmc::{export_refined_spec, hazard_log_report};
use riskcore::treatment::{self, ResidualModel};
use riskcore::workspace::{Mutation, Workspace as CoreWorkspace};
use riskcore::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(riskcore, RiskcoreError, PyException);
create_exception!(riskcore, ValidationError, RiskcoreError);
create_exception!(riskcore, ConflictError, RiskcoreError);

fn err(e: Error) -> PyErr {
    match &e {
        Error::Validation(report) => {
            let detail = serde_json::to_string(report).unwrap_or_default();
            ValidationError::new_err((e.to_string(), detail))
        }
        Error::Locked(_) | Error::VersionConflict { .. } => ConflictError::new_err(e.to_string()),
        _ => RiskcoreError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Accepts int, float or a decimal/ratio string such as `"1/8030000"`.
fn exact(obj: &Bound<'_, PyAny>) -> PyResult<Exact> {
    let parsed = if obj.is_instance_of::<PyString>() {
        obj.extract::<String>()?.parse::<Exact>()
    } else if obj.is_instance_of::<PyInt>() {
        Ok(Exact::from_integer(obj.extract()?))
    } else if obj.is_instance_of::<PyFloat>() {
        Exact::from_f64(obj.extract()?)
    } else {
        return Err(PyValueError::new_err("expected int, float or numeric string"));
    };
    parsed.map_err(|e| PyValueError::new_err(e.to_string()))
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A parsed behavior specification.
#[pyclass(module = "riskcore", from_py_object)]
#[derive(Clone)]
struct BehaviorSpec {
    inner: CoreSpec,
}

#[pymethods]
impl BehaviorSpec {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        parse_spec(text).map(|inner| BehaviorSpec { inner }).map_err(|e| err(e.into()))
    }

    fn to_text(&self) -> String {
        serialize_spec(&self.inner)
    }

    #[getter]
    fn version(&self) -> u64 {
        self.inner.version
    }

    #[getter]
    fn facts(&self) -> Vec<String> {
        self.inner.facts.keys().cloned().collect()
    }

    #[getter]
    fn actions(&self) -> Vec<String> {
        self.inner.actions.keys().cloned().collect()
    }

    #[getter]
    fn rules(&self) -> Vec<String> {
        self.inner.rules.keys().cloned().collect()
    }

    /// Closure of `asserted`: `(facts, actions)` as sorted lists.
    fn infer(&self, asserted: BTreeSet<String>) -> PyResult<(Vec<String>, Vec<String>)> {
        let s = infer_from(&self.inner, "python", &asserted).map_err(err)?;
        Ok((s.derived_facts.into_iter().collect(), s.actions.into_iter().collect()))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "BehaviorSpec(version={}, facts={}, actions={}, rules={})",
            self.inner.version,
            self.inner.facts.len(),
            self.inner.actions.len(),
            self.inner.rules.len()
        )
    }
}

/// A workspace directory. Every mutation is one committed transaction.
#[pyclass(module = "riskcore")]
struct Workspace {
    root: PathBuf,
}

impl Workspace {
    fn open(&self) -> PyResult<CoreWorkspace> {
        CoreWorkspace::open(&self.root).map_err(err)
    }

    fn commit<'py>(&self, py: Python<'py>, mutation: Mutation) -> PyResult<Bound<'py, PyAny>> {
        let mut ws = self.open()?;
        let c = ws.transact(None, mutation, &Stamp::now("python")).map_err(err)?;
        to_py(py, &c.outcome)
    }
}

#[pymethods]
impl Workspace {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        CoreWorkspace::open(&path).map_err(err)?;
        Ok(Workspace { root: path })
    }

    #[staticmethod]
    #[pyo3(signature = (path, fixture=None, force=false))]
    fn init(path: PathBuf, fixture: Option<&str>, force: bool) -> PyResult<Self> {
        CoreWorkspace::init(&path, fixture, force, &Stamp::now("python")).map_err(err)?;
        Ok(Workspace { root: path })
    }

    #[getter]
    fn root(&self) -> PathBuf {
        self.root.clone()
    }

    #[getter]
    fn version(&self) -> PyResult<u64> {
        Ok(self.open()?.version())
    }

    /// Referential-integrity violations; empty when valid.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = validate_model(self.open()?.model());
        to_py(py, &report.violations)
    }

    /// Actions per scenario.
    fn infer<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let ws = self.open()?;
        let states = derive_catalog(&ws.model().spec, &ws.model().scenarios).map_err(err)?;
        let out = PyDict::new(py);
        for (id, s) in states {
            out.set_item(id, s.actions.into_iter().collect::<Vec<_>>())?;
        }
        Ok(out)
    }

    fn spec(&self) -> PyResult<BehaviorSpec> {
        Ok(BehaviorSpec {
            inner: self.open()?.model().spec.clone(),
        })
    }

    fn analyze<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        self.commit(py, Mutation::Analyze)
    }

    fn evaluate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        self.commit(py, Mutation::Evaluate)
    }

    fn treat<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        self.commit(py, Mutation::Treat)
    }

    fn iterate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        self.commit(py, Mutation::Step)
    }

    #[pyo3(signature = (max_iterations=8))]
    fn run<'py>(&self, py: Python<'py>, max_iterations: u32) -> PyResult<Bound<'py, PyAny>> {
        self.commit(py, Mutation::Run { max_iterations })
    }

    fn reset<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        self.commit(py, Mutation::Reset)
    }

    /// Queues a measure given as a dict with the proposal fields.
    #[pyo3(signature = (proposal, apply=false))]
    fn propose_measure<'py>(&self, py: Python<'py>, proposal: &Bound<'py, PyAny>, apply: bool) -> PyResult<Bound<'py, PyAny>> {
        let proposal: MeasureProposal = from_py(proposal)?;
        self.commit(py, Mutation::ProposeMeasure { proposal, apply })
    }

    fn hazard_log<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &hazard_log_report(self.open()?.project()))
    }

    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.open()?.report())
    }

    #[pyo3(signature = (draft=false))]
    fn export<'py>(&self, py: Python<'py>, draft: bool) -> PyResult<Bound<'py, PyAny>> {
        let ws = self.open()?;
        to_py(py, &export_refined_spec(ws.project(), draft).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("Workspace({:?})", self.root)
    }
}

/// The crossing-intention measure of the bundled fixture, as a dict.
#[pyfunction]
fn fixture_measure(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &riskcore::fixture::crossing_intention_proposal())
}

/// Operating hours per year of a fleet.
#[pyfunction]
fn fleet_exposure_hours(fleet_size: u64, hours_per_day: &Bound<'_, PyAny>, days_per_year: &Bound<'_, PyAny>) -> PyResult<f64> {
    let f = FleetExposure::new(fleet_size, exact(hours_per_day)?, exact(days_per_year)?).map_err(value_err)?;
    Ok(estimation::fleet_exposure_hours(&f).map_err(value_err)?.value().to_f64())
}

/// Events per hour from events per year and hours per year.
#[pyfunction]
fn harm_rate(events_per_year: &Bound<'_, PyAny>, exposure_hours: &Bound<'_, PyAny>) -> PyResult<f64> {
    let n = EventsPerYear::new(exact(events_per_year)?).map_err(value_err)?;
    let h = HoursPerYear::new(exact(exposure_hours)?).map_err(value_err)?;
    Ok(estimation::harm_rate(&n, &h).map_err(value_err)?.value().to_f64())
}

/// Integrity needed to bring `initial` below `tolerable`.
#[pyfunction]
fn required_integrity(initial: &Bound<'_, PyAny>, tolerable: &Bound<'_, PyAny>) -> PyResult<f64> {
    let i = EventsPerHour::new(exact(initial)?).map_err(value_err)?;
    let t = EventsPerHour::new(exact(tolerable)?).map_err(value_err)?;
    Ok(treatment::required_integrity(&i, &t).value().to_f64())
}

/// `max(min, initial * (1 - effectiveness * integrity)) + corrupt`.
#[pyfunction]
#[pyo3(signature = (initial, effectiveness, integrity, corrupt=None, min=None))]
fn predicted_residual(
    initial: &Bound<'_, PyAny>,
    effectiveness: &Bound<'_, PyAny>,
    integrity: &Bound<'_, PyAny>,
    corrupt: Option<&Bound<'_, PyAny>>,
    min: Option<&Bound<'_, PyAny>>,
) -> PyResult<f64> {
    let opt = |o: Option<&Bound<'_, PyAny>>| o.map(exact).transpose().map(Option::unwrap_or_default);
    let rate = |x: Exact| EventsPerHour::new(x).map_err(value_err);
    let prob = |x: Exact| Probability::new(x).map_err(value_err);
    let m = ResidualModel {
        initial: RiskValue {
            rate: rate(exact(initial)?)?,
            severity_class: SeverityClass::S3,
        },
        minimum_achievable_rate: rate(opt(min)?)?,
        reduction_effectiveness: prob(exact(effectiveness)?)?,
        integrity: prob(exact(integrity)?)?,
        corrupt_risk_rate: rate(opt(corrupt)?)?,
    };
    Ok(treatment::predicted_residual(&m).rate.value().to_f64())
}

#[pymodule]
#[pyo3(name = "riskcore")]
fn riskcore_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<BehaviorSpec>()?;
    m.add_class::<Workspace>()?;
    m.add_function(wrap_pyfunction!(fixture_measure, m)?)?;
    m.add_function(wrap_pyfunction!(fleet_exposure_hours, m)?)?;
    m.add_function(wrap_pyfunction!(harm_rate, m)?)?;
    m.add_function(wrap_pyfunction!(required_integrity, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_residual, m)?)?;
    m.add("RiskcoreError", m.py().get_type::<RiskcoreError>())?;
    m.add("ValidationError", m.py().get_type::<ValidationError>())?;
    m.add("ConflictError", m.py().get_type::<ConflictError>())?;
    m.add("FIXTURE", riskcore::fixture::NAME)?;
    Ok(())
}
