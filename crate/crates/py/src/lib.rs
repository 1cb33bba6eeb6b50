//! Python bindings: model loading and screening, metrics, dataset hashing,
//! splitting and duplicate checks, golden replay and session logs.

use std::path::PathBuf;

use msl_core::datasets::{self, DatasetManifest, SplitMix, SplitRatios};
use msl_core::engine::{execute, ExecOptions};
use msl_core::golden::{self, GoldenBundle};
use msl_core::imaging;
use msl_core::metrics::{self, ConfusionMatrix, DiagnosticsReport};
use msl_core::model_io::{self, validate_envelope, ModelContainer};
use msl_core::screening::{self, SessionLog, TriageThresholds};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts any serializable value into plain Python objects.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn thresholds(positive: f64, review_floor: f64) -> PyResult<TriageThresholds> {
    if !(0.0 < review_floor && review_floor <= positive && positive <= 1.0) {
        return Err(PyValueError::new_err("thresholds need 0 < review_floor <= positive <= 1"));
    }
    Ok(TriageThresholds { positive, review_floor })
}

/// A loaded, validated MSLW model.
#[pyclass(frozen, module = "msl")]
struct Model {
    inner: ModelContainer,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = model_io::load_model(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: model_io::read_model(data).map_err(value_err)?,
        })
    }

    /// Serializes the model in canonical MSLW form.
    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &model_io::write_model(&self.inner))
    }

    #[getter]
    fn model_name(&self) -> String {
        self.inner.metadata().model_name.clone()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names().to_vec()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint().to_string()
    }

    #[getter]
    fn param_count(&self) -> u64 {
        self.inner.param_count()
    }

    #[getter]
    fn input_shape(&self) -> Vec<usize> {
        self.inner.graph().input_shape().to_vec()
    }

    fn metadata<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.metadata())
    }

    fn envelope<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &validate_envelope(&self.inner))
    }

    /// Class probabilities for an encoded PNG or JPEG image.
    fn predict(&self, py: Python<'_>, image: &[u8]) -> PyResult<Vec<f32>> {
        let image = image.to_vec();
        py.detach(|| {
            let img = imaging::decode(&image).map_err(value_err)?;
            let input = imaging::preprocess(&img, self.inner.metadata()).map_err(value_err)?;
            let (p, _) = execute(&self.inner, &input, &ExecOptions::default()).map_err(value_err)?;
            Ok(p)
        })
    }

    /// Probabilities for an already preprocessed NCHW input, given flat.
    fn predict_tensor(&self, py: Python<'_>, data: Vec<f32>) -> PyResult<Vec<f32>> {
        let shape = self.inner.graph().input_shape().to_vec();
        py.detach(|| {
            let input = msl_core::Tensor::new(shape, data).map_err(value_err)?;
            let (p, _) = execute(&self.inner, &input, &ExecOptions::default()).map_err(value_err)?;
            Ok(p)
        })
    }

    /// Full screening result for an encoded image, as a dict.
    #[pyo3(signature = (image, positive = 0.5, review_floor = 0.2))]
    fn screen<'py>(&self, py: Python<'py>, image: &[u8], positive: f64, review_floor: f64) -> PyResult<Bound<'py, PyAny>> {
        let t = thresholds(positive, review_floor)?;
        let image = image.to_vec();
        let result = py.detach(|| screening::screen_bytes(&self.inner, &image, &t)).map_err(value_err)?;
        to_py(py, &result)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(name={:?}, params={}, fingerprint={:.12})",
            self.inner.metadata().model_name,
            self.inner.param_count(),
            self.inner.fingerprint()
        )
    }
}

/// Triage label for probabilities in model class order.
#[pyfunction]
#[pyo3(signature = (probabilities, target = 0, positive = 0.5, review_floor = 0.2))]
fn triage(probabilities: Vec<f32>, target: usize, positive: f64, review_floor: f64) -> PyResult<&'static str> {
    if target >= probabilities.len() {
        return Err(PyValueError::new_err("target index out of range"));
    }
    Ok(screening::triage_rule(&probabilities, target, &thresholds(positive, review_floor)?).as_str())
}

#[pyfunction]
#[pyo3(signature = (successes, n, confidence = 0.95))]
fn wilson_interval(successes: u64, n: u64, confidence: f64) -> PyResult<(f64, f64)> {
    metrics::wilson_interval(successes, n, confidence).map_err(value_err)
}

/// Diagnostics report for a confusion matrix (rows = truth), as a dict.
#[pyfunction]
#[pyo3(signature = (counts, class_names = None, target = "mpox", confidence = 0.95))]
fn diagnostics_report<'py>(
    py: Python<'py>,
    counts: Vec<Vec<u64>>,
    class_names: Option<Vec<String>>,
    target: &str,
    confidence: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let names = class_names.unwrap_or_else(model_io::ModelMetadata::default_class_names);
    let cm = ConfusionMatrix::from_counts(names, counts).map_err(value_err)?;
    let t = cm
        .class_index(target)
        .ok_or_else(|| PyValueError::new_err(format!("no class named {target:?}")))?;
    to_py(py, &DiagnosticsReport::new(&cm, t, confidence).map_err(value_err)?)
}

/// Text table for a confusion matrix.
#[pyfunction]
#[pyo3(signature = (counts, class_names = None, target = "mpox", confidence = 0.95))]
fn report_table(counts: Vec<Vec<u64>>, class_names: Option<Vec<String>>, target: &str, confidence: f64) -> PyResult<String> {
    let names = class_names.unwrap_or_else(model_io::ModelMetadata::default_class_names);
    let cm = ConfusionMatrix::from_counts(names, counts).map_err(value_err)?;
    let t = cm
        .class_index(target)
        .ok_or_else(|| PyValueError::new_err(format!("no class named {target:?}")))?;
    Ok(DiagnosticsReport::new(&cm, t, confidence).map_err(value_err)?.to_text_table())
}

/// 64-bit difference hash of an encoded image, as 16 hex digits.
#[pyfunction]
fn dhash(image: &[u8]) -> PyResult<String> {
    Ok(datasets::dhash_hex(&imaging::decode(image).map_err(value_err)?))
}

#[pyfunction]
fn hamming(a: &str, b: &str) -> PyResult<u32> {
    let parse = |s: &str| u64::from_str_radix(s, 16).map_err(|_| PyValueError::new_err(format!("{s:?} is not a hex hash")));
    Ok(datasets::hamming(parse(a)?, parse(b)?))
}

#[pyfunction]
fn sha256_hex(data: &[u8]) -> String {
    model_io::sha256_hex(data)
}

/// Builds a manifest from a `<label>/<source>/<file>` tree or a JSONL
/// listing, writes it to `out` and returns the skipped-file warnings.
#[pyfunction]
fn ingest(input: PathBuf, out: PathBuf) -> PyResult<Vec<String>> {
    let outcome = datasets::ingest(&input).map_err(value_err)?;
    outcome.manifest.save(&out).map_err(value_err)?;
    Ok(outcome.warnings)
}

/// Splits the manifest at `manifest` and writes the result to `out`.
/// Returns per-split record counts.
#[pyfunction]
#[pyo3(signature = (manifest, out, seed = 0, train = 0.75, val = 0.10, test = 0.15, synthetic_fraction = 0.5))]
fn split_manifest(
    manifest: PathBuf,
    out: PathBuf,
    seed: u64,
    train: f64,
    val: f64,
    test: f64,
    synthetic_fraction: f64,
) -> PyResult<(usize, usize, usize)> {
    let m = DatasetManifest::load(&manifest).map_err(value_err)?;
    let mix = SplitMix {
        mpox_train_synthetic_fraction: synthetic_fraction,
    };
    let s = datasets::split(&m, SplitRatios { train, val, test }, mix, seed).map_err(value_err)?;
    s.save(&out).map_err(value_err)?;
    let n = |split| s.in_split(split).count();
    Ok((n(datasets::Split::Train), n(datasets::Split::Val), n(datasets::Split::Test)))
}

/// Duplicate report between two manifest files, as a dict.
#[pyfunction]
#[pyo3(signature = (a, b, threshold = datasets::DEFAULT_HAMMING_THRESHOLD))]
fn dedup_check<'py>(py: Python<'py>, a: PathBuf, b: PathBuf, threshold: u32) -> PyResult<Bound<'py, PyAny>> {
    let a = DatasetManifest::load(&a).map_err(value_err)?;
    let b = DatasetManifest::load(&b).map_err(value_err)?;
    let r = datasets::dedup_check(&a, &b, threshold).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (r.to_json(),))
}

#[derive(Serialize)]
struct ReplaySummary {
    nodes: Vec<(usize, &'static str, f32)>,
    probabilities: Vec<f32>,
    probabilities_max_abs_diff: f32,
    preprocess_max_abs_diff: Option<f32>,
}

/// Replays a golden bundle through a model. Returns per-node
/// `(id, kind, max_abs_diff)` and the probability difference.
#[pyfunction]
fn replay_golden<'py>(py: Python<'py>, model: &Model, bundle: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let bundle = GoldenBundle::load(&bundle).map_err(value_err)?;
    let r = golden::replay(&model.inner, &bundle).map_err(value_err)?;
    to_py(
        py,
        &ReplaySummary {
            nodes: r.nodes.iter().map(|n| (n.id, n.kind, n.max_abs_diff)).collect(),
            probabilities: r.probabilities,
            probabilities_max_abs_diff: r.probabilities_max_abs_diff,
            preprocess_max_abs_diff: r.preprocess_max_abs_diff,
        },
    )
}

/// Current case states of a session log, one dict per case.
#[pyfunction]
fn session_cases<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let log = SessionLog::open(&path).map_err(value_err)?;
    to_py(py, &log.cases())
}

#[pymodule]
fn msl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(triage, m)?)?;
    m.add_function(wrap_pyfunction!(wilson_interval, m)?)?;
    m.add_function(wrap_pyfunction!(diagnostics_report, m)?)?;
    m.add_function(wrap_pyfunction!(report_table, m)?)?;
    m.add_function(wrap_pyfunction!(dhash, m)?)?;
    m.add_function(wrap_pyfunction!(hamming, m)?)?;
    m.add_function(wrap_pyfunction!(sha256_hex, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(split_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(dedup_check, m)?)?;
    m.add_function(wrap_pyfunction!(replay_golden, m)?)?;
    m.add_function(wrap_pyfunction!(session_cases, m)?)?;
    m.add("TARGET_CLASS", screening::TARGET_CLASS)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_ordering_is_enforced() {
        assert!(thresholds(0.5, 0.2).is_ok());
        assert!(thresholds(1.0, 1.0).is_ok());
        assert!(thresholds(0.2, 0.5).is_err());
        assert!(thresholds(0.5, 0.0).is_err());
        assert!(thresholds(1.5, 0.2).is_err());
    }
}
