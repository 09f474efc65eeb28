//! Python bindings: presentation order, agreement statistics, archive
//! ingestion, annotation sessions and CSV reports.
//!
//! Structured results are returned as plain Python dicts and lists with the
//! same field names the HTTP API uses.

use std::collections::HashMap;

use chrono::Utc;
use patchswipe_core::analytics::{self, LabelMatrix, RatingRecord};
use patchswipe_core::export::{export_rows, read_csv, to_csv_bytes};
use patchswipe_core::ingest::IngestWarning;
use patchswipe_core::session::{SessionContext, SessionEvent};
use patchswipe_core::{
    ArchiveFormat, ClassLabel, Dataset, DeviceType, DirectionAction, DirectionMapping, ExportOptions, IngestOptions,
    Manifest, NextItem, ParticipantId, SessionState, StudyConfig, StudyMode, SwipeDirection,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Deterministic presentation order of `n` patches for one participant.
#[pyfunction]
fn build_order(study_id: &str, participant_id: &str, n: usize) -> PyResult<Vec<usize>> {
    patchswipe_core::build_order(study_id, participant_id, n).map_err(value_err)
}

#[pyfunction]
fn percent_agreement(a: Vec<String>, b: Vec<String>) -> PyResult<f64> {
    analytics::percent_agreement(&a, &b).map_err(value_err)
}

#[pyfunction]
fn cohen_kappa(a: Vec<String>, b: Vec<String>) -> PyResult<f64> {
    analytics::cohen_kappa(&a, &b).map_err(value_err)
}

/// Fleiss' kappa over an items x raters table of labels.
#[pyfunction]
fn fleiss_kappa(rows: Vec<Vec<String>>) -> PyResult<f64> {
    let matrix = LabelMatrix::from_rows(&rows).map_err(value_err)?;
    analytics::fleiss_kappa(&matrix).map_err(value_err)
}

/// Width, height and format of a PNG or JPEG, read from its header.
#[pyfunction]
fn validate_image(py: Python<'_>, data: &[u8]) -> PyResult<Py<PyAny>> {
    let info = patchswipe_core::validate_image(data).map_err(value_err)?;
    to_py(py, &info)
}

/// An ingested set of patches.
#[pyclass(name = "Dataset", module = "patchswipe", frozen)]
struct PyDataset {
    inner: Dataset,
    warnings: Vec<IngestWarning>,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn dataset_id(&self) -> String {
        self.inner.dataset_id.to_string()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn patches(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.patches)
    }

    /// Skipped archive entries as `{"entry", "reason", ...}` dicts.
    #[getter]
    fn warnings(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.warnings)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(value_err)?,
            warnings: Vec::new(),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset({:?}, {} patches)", self.inner.name, self.inner.len())
    }
}

/// Reads a zip or tar(.gz) archive of PNG/JPEG patches.
///
/// `labels` is an optional `filename,label` CSV. With `require_ground_truth`
/// every patch must end up labeled.
#[pyfunction]
#[pyo3(signature = (data, name, format = None, labels = None, require_ground_truth = false))]
fn ingest_archive(
    data: &[u8],
    name: &str,
    format: Option<&str>,
    labels: Option<&[u8]>,
    require_ground_truth: bool,
) -> PyResult<PyDataset> {
    let format = match format {
        Some(f) => f.parse().map_err(PyValueError::new_err)?,
        None if data.starts_with(b"PK") => ArchiveFormat::Zip,
        None => ArchiveFormat::Tar,
    };
    let options = IngestOptions {
        manifest: labels.map(Manifest::from_csv).transpose().map_err(value_err)?,
        require_ground_truth,
    };
    let report = patchswipe_core::ingest_archive(data, format, name, &options).map_err(value_err)?;
    Ok(PyDataset {
        warnings: report.warnings,
        inner: report.dataset,
    })
}

fn parse_mapping(mapping: HashMap<String, String>) -> PyResult<DirectionMapping> {
    let mut m = DirectionMapping::empty();
    for (dir, action) in mapping {
        let dir: SwipeDirection = dir.parse().map_err(value_err)?;
        let action = match action.as_str() {
            "postpone" => DirectionAction::Postpone,
            "" | "none" => DirectionAction::Unassigned,
            label => DirectionAction::Label(ClassLabel::new(label)),
        };
        m.set(dir, action);
    }
    Ok(m)
}

fn parse_device(device: &str) -> PyResult<DeviceType> {
    device.parse().map_err(value_err)
}

/// One participant's annotation session over a dataset.
///
/// `mapping` maps directions (`left`, `right`, `up`, `down`) to a class
/// label, `"postpone"` or `"none"`; it defaults to
/// `left=normal, right=atypical, up=postpone`.
#[pyclass(name = "Session", module = "patchswipe")]
struct PySession {
    state: SessionState,
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (dataset, study_id, participant_id, mapping = None, mode = "annotation", events = None))]
    fn new(
        dataset: &PyDataset,
        study_id: &str,
        participant_id: &str,
        mapping: Option<HashMap<String, String>>,
        mode: &str,
        events: Option<&str>,
    ) -> PyResult<Self> {
        let mut config = StudyConfig::new(study_id, dataset.inner.dataset_id.clone());
        if let Some(m) = mapping {
            config.mapping = parse_mapping(m)?;
        }
        config.mode = match mode {
            "annotation" => StudyMode::Annotation,
            "training" => StudyMode::Training,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        let ctx = SessionContext::new(&config, &dataset.inner, ParticipantId::new(participant_id));
        let events: Vec<SessionEvent> = match events {
            Some(text) => serde_json::from_str(text).map_err(value_err)?,
            None => Vec::new(),
        };
        let state = SessionState::replay(ctx, &events).map_err(value_err)?;
        Ok(Self { state })
    }

    /// The outstanding presentation, or `None` once every patch is labeled.
    fn next(&mut self, py: Python<'_>) -> PyResult<Option<Py<PyAny>>> {
        match self.state.next_item(Utc::now()).map_err(value_err)? {
            NextItem::Present(p) => Ok(Some(to_py(py, &p)?)),
            NextItem::Done => Ok(None),
        }
    }

    #[pyo3(signature = (direction, duration_ms = None, device = "unknown"))]
    fn submit(&mut self, py: Python<'_>, direction: &str, duration_ms: Option<i64>, device: &str) -> PyResult<Py<PyAny>> {
        let direction: SwipeDirection = direction.parse().map_err(value_err)?;
        let outcome = self
            .state
            .submit(direction, Utc::now(), duration_ms, parse_device(device)?)
            .map_err(value_err)?;
        to_py(py, &outcome)
    }

    #[pyo3(signature = (duration_ms = None, device = "unknown"))]
    fn postpone(&mut self, py: Python<'_>, duration_ms: Option<i64>, device: &str) -> PyResult<Py<PyAny>> {
        let outcome = self
            .state
            .postpone(Utc::now(), duration_ms, parse_device(device)?)
            .map_err(value_err)?;
        to_py(py, &outcome)
    }

    /// Reverts the latest decision; returns the patch id shown next.
    fn undo(&mut self) -> PyResult<String> {
        Ok(self.state.undo(Utc::now()).map_err(value_err)?.to_string())
    }

    fn progress(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.state.progress())
    }

    #[getter]
    fn order(&self) -> Vec<usize> {
        self.state.order().to_vec()
    }

    #[getter]
    fn completed(&self) -> bool {
        self.state.completed()
    }

    fn history(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.state.history())
    }

    /// The event log as JSON; pass it back as `events=` to resume.
    fn events_json(&self) -> PyResult<String> {
        serde_json::to_string(self.state.log()).map_err(value_err)
    }

    #[pyo3(signature = (include_history = false))]
    fn export_csv<'py>(&self, py: Python<'py>, include_history: bool) -> Bound<'py, PyBytes> {
        let rows = export_rows([&self.state], ExportOptions { include_history });
        PyBytes::new(py, &to_csv_bytes(&rows))
    }
}

/// Concatenates the exports of several sessions into one CSV.
#[pyfunction]
#[pyo3(signature = (sessions, include_history = false))]
fn export_csv<'py>(py: Python<'py>, sessions: Vec<PyRef<'py, PySession>>, include_history: bool) -> Bound<'py, PyBytes> {
    let rows = export_rows(sessions.iter().map(|s| &s.state), ExportOptions { include_history });
    PyBytes::new(py, &to_csv_bytes(&rows))
}

fn report_of(data: &[u8]) -> PyResult<analytics::AgreementReport> {
    let rows = read_csv(data).map_err(value_err)?;
    let ratings: Vec<RatingRecord> = rows.iter().map(RatingRecord::from).collect();
    analytics::report_from_ratings(&ratings, std::iter::empty()).map_err(value_err)
}

/// Agreement and timing report computed from exported CSV bytes.
#[pyfunction]
fn report_from_csv(py: Python<'_>, data: &[u8]) -> PyResult<Py<PyAny>> {
    to_py(py, &report_of(data)?)
}

/// The same report as a fixed-width text table.
#[pyfunction]
fn report_table_from_csv(data: &[u8]) -> PyResult<String> {
    Ok(report_of(data)?.render_table())
}

#[pymodule]
pub fn patchswipe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(build_order, m)?)?;
    m.add_function(wrap_pyfunction!(percent_agreement, m)?)?;
    m.add_function(wrap_pyfunction!(cohen_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(fleiss_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(validate_image, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_archive, m)?)?;
    m.add_function(wrap_pyfunction!(export_csv, m)?)?;
    m.add_function(wrap_pyfunction!(report_from_csv, m)?)?;
    m.add_function(wrap_pyfunction!(report_table_from_csv, m)?)?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PySession>()?;
    Ok(())
}
