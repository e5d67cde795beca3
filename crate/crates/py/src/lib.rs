//! Python bindings for the fusecal scoring pipeline.
//!
//! The module mirrors the core crate's main types and operations: catalogs,
//! embeddings, match records, score matrices, calibrators, fusion and the
//! retrieval helpers, plus the synthetic generator and the config-driven
//! pipeline runner.

// Binding signatures mirror the Python-side tuples.
#![allow(clippy::type_complexity)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use fusecal_core::calibration as cal;
use fusecal_core::data;
use fusecal_core::error::Error;
use fusecal_core::fusion;
use fusecal_core::io;
use fusecal_core::pipeline;
use fusecal_core::retrieval;
use fusecal_core::similarity;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPyResult<T> {
    fn into_py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for fusecal_core::Result<T> {
    fn into_py(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

fn parse_role(role: &str) -> PyResult<data::Role> {
    match role {
        "database" => Ok(data::Role::Database),
        "query" => Ok(data::Role::Query),
        other => Err(PyValueError::new_err(format!(
            "role must be 'database' or 'query', got '{other}'"
        ))),
    }
}

fn parse_method(method: &str) -> PyResult<cal::CalibrationMethod> {
    cal::CalibrationMethod::parse(method).into_py()
}

/// Ordered items with identities; positions are the indices used by every
/// matrix referencing the catalog.
#[pyclass(name = "ItemCatalog", skip_from_py_object)]
#[derive(Clone)]
struct PyItemCatalog {
    inner: data::ItemCatalog,
}

#[pymethods]
impl PyItemCatalog {
    #[new]
    fn new(role: &str, entries: Vec<(String, String)>) -> PyResult<Self> {
        Ok(Self {
            inner: data::ItemCatalog::new(parse_role(role)?, entries).into_py()?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf, role: &str) -> PyResult<Self> {
        Ok(Self {
            inner: io::read_label_file(&path, parse_role(role)?).into_py()?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        io::write_label_file(&path, &self.inner).into_py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn item_id(&self, index: usize) -> String {
        self.inner.item_id(index).to_string()
    }

    fn identity(&self, index: usize) -> String {
        self.inner.identity(index).to_string()
    }

    fn index_of(&self, item_id: &str) -> Option<usize> {
        self.inner.index_of(item_id)
    }
}

/// Row-major embedding matrix; rows must be finite with positive norm.
#[pyclass(name = "EmbeddingMatrix", skip_from_py_object)]
#[derive(Clone)]
struct PyEmbeddingMatrix {
    inner: data::EmbeddingMatrix,
}

#[pymethods]
impl PyEmbeddingMatrix {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let n_rows = rows.len();
        let dims = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(PyValueError::new_err("rows have inconsistent lengths"));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Self {
            inner: data::EmbeddingMatrix::new(n_rows, dims, values).into_py()?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::read_embedding_file(&path).into_py()?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        io::write_embedding_file(&path, &self.inner).into_py()
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn dims(&self) -> usize {
        self.inner.dims()
    }

    fn row(&self, index: usize) -> Vec<f64> {
        self.inner.row(index).to_vec()
    }
}

/// Per-pair lists of match confidences in [0, 1].
#[pyclass(name = "MatchRecordSet", skip_from_py_object)]
#[derive(Clone)]
struct PyMatchRecordSet {
    inner: data::MatchRecordSet,
}

#[pymethods]
impl PyMatchRecordSet {
    #[new]
    fn new(n_query: usize, n_database: usize) -> Self {
        Self {
            inner: data::MatchRecordSet::new(n_query, n_database),
        }
    }

    #[staticmethod]
    fn read(
        path: PathBuf,
        query_catalog: &PyItemCatalog,
        db_catalog: &PyItemCatalog,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: io::read_match_file(&path, &query_catalog.inner, &db_catalog.inner)
                .into_py()?,
        })
    }

    fn write(
        &self,
        path: PathBuf,
        query_catalog: &PyItemCatalog,
        db_catalog: &PyItemCatalog,
    ) -> PyResult<()> {
        io::write_match_file(&path, &self.inner, &query_catalog.inner, &db_catalog.inner)
            .into_py()
    }

    fn add(&mut self, query: usize, database: usize, confidence: f64) -> PyResult<()> {
        self.inner.add(query, database, confidence).into_py()
    }

    fn confidences(&self, query: usize, database: usize) -> Vec<f64> {
        self.inner.confidences(query, database).to_vec()
    }

    fn n_pairs(&self) -> usize {
        self.inner.n_pairs()
    }
}

/// Dense query-by-database score matrix with a kind tag.
#[pyclass(name = "ScoreMatrix", from_py_object)]
#[derive(Clone)]
struct PyScoreMatrix {
    inner: data::ScoreMatrix,
}

fn kind_name(kind: data::ScoreKind) -> &'static str {
    match kind {
        data::ScoreKind::RawGlobal => "raw_global",
        data::ScoreKind::RawLocal => "raw_local",
        data::ScoreKind::Calibrated => "calibrated",
        data::ScoreKind::Fused => "fused",
    }
}

#[pymethods]
impl PyScoreMatrix {
    #[new]
    fn new(kind: &str, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let parsed = match kind {
            "raw_global" => data::ScoreKind::RawGlobal,
            "raw_local" => data::ScoreKind::RawLocal,
            "calibrated" => data::ScoreKind::Calibrated,
            "fused" => data::ScoreKind::Fused,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown score kind '{other}'"
                )))
            }
        };
        let n_query = rows.len();
        let n_database = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n_database) {
            return Err(PyValueError::new_err("rows have inconsistent lengths"));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Self {
            inner: data::ScoreMatrix::new(parsed, n_query, n_database, values).into_py()?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::read_score_file(&path).into_py()?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        io::write_score_file(&path, &self.inner).into_py()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        kind_name(self.inner.kind())
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n_query(), self.inner.n_database())
    }

    fn get(&self, query: usize, database: usize) -> f64 {
        self.inner.get(query, database)
    }

    fn values(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_query())
            .map(|q| self.inner.row(q).to_vec())
            .collect()
    }
}

/// Scored pairs with binary same-identity labels.
#[pyclass(name = "PairLabelSet", skip_from_py_object)]
#[derive(Clone)]
struct PyPairLabelSet {
    inner: data::PairLabelSet,
}

#[pymethods]
impl PyPairLabelSet {
    #[new]
    fn new(pairs: Vec<(f64, bool)>) -> PyResult<Self> {
        Ok(Self {
            inner: data::PairLabelSet::new(pairs).into_py()?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn pairs(&self) -> Vec<(f64, bool)> {
        self.inner.pairs().to_vec()
    }

    fn n_positive(&self) -> usize {
        self.inner.n_positive()
    }
}

/// Fitted strictly increasing map from raw score to [0, 1].
#[pyclass(name = "Calibrator", skip_from_py_object)]
#[derive(Clone)]
struct PyCalibrator {
    inner: cal::Calibrator,
}

#[pymethods]
impl PyCalibrator {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: cal::Calibrator::load(&path).into_py()?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: cal::Calibrator::from_json(text).into_py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).into_py()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method().name()
    }

    #[getter]
    fn training_range(&self) -> (f64, f64) {
        self.inner.training_range()
    }

    #[getter]
    fn is_decreasing(&self) -> bool {
        self.inner.is_decreasing()
    }

    fn apply_scalar(&self, score: f64) -> f64 {
        self.inner.apply_scalar(score)
    }

    fn apply(&self, scores: &PyScoreMatrix) -> PyResult<PyScoreMatrix> {
        Ok(PyScoreMatrix {
            inner: cal::apply_calibrator(&self.inner, &scores.inner).into_py()?,
        })
    }
}

/// Validation/test partition of the query index range.
#[pyclass(name = "SplitSpec", skip_from_py_object)]
#[derive(Clone)]
struct PySplitSpec {
    inner: data::SplitSpec,
}

#[pymethods]
impl PySplitSpec {
    #[getter]
    fn validation(&self) -> Vec<usize> {
        self.inner.validation().to_vec()
    }

    #[getter]
    fn test(&self) -> Vec<usize> {
        self.inner.test().to_vec()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    similarity::cosine_similarity(&a, &b).into_py()
}

#[pyfunction]
fn global_score_matrix(
    query: &PyEmbeddingMatrix,
    database: &PyEmbeddingMatrix,
) -> PyResult<PyScoreMatrix> {
    Ok(PyScoreMatrix {
        inner: similarity::global_score_matrix(&query.inner, &database.inner).into_py()?,
    })
}

#[pyfunction]
fn local_match_count(confidences: Vec<f64>, mu: f64) -> PyResult<usize> {
    let threshold = similarity::MatchThreshold::new(mu).into_py()?;
    similarity::local_match_count(&confidences, threshold).into_py()
}

#[pyfunction]
fn local_score_matrix(
    records: &PyMatchRecordSet,
    mu: f64,
    n_query: usize,
    n_database: usize,
) -> PyResult<PyScoreMatrix> {
    let threshold = similarity::MatchThreshold::new(mu).into_py()?;
    Ok(PyScoreMatrix {
        inner: similarity::local_score_matrix(&records.inner, threshold, n_query, n_database)
            .into_py()?,
    })
}

#[pyfunction]
fn build_pair_labels(
    scores: &PyScoreMatrix,
    query_catalog: &PyItemCatalog,
    db_catalog: &PyItemCatalog,
    subset: Vec<usize>,
) -> PyResult<PyPairLabelSet> {
    Ok(PyPairLabelSet {
        inner: data::build_pair_labels(
            &scores.inner,
            &query_catalog.inner,
            &db_catalog.inner,
            &subset,
        )
        .into_py()?,
    })
}

#[pyfunction]
fn make_split(query_catalog: &PyItemCatalog, ratio: f64, seed: u64) -> PyResult<PySplitSpec> {
    Ok(PySplitSpec {
        inner: data::make_split(&query_catalog.inner, ratio, seed).into_py()?,
    })
}

/// Fit a calibrator; returns the calibrator and any fitting warnings.
#[pyfunction]
fn fit_calibrator(method: &str, pairs: &PyPairLabelSet) -> PyResult<(PyCalibrator, Vec<String>)> {
    let fit = cal::fit_calibrator(parse_method(method)?, &pairs.inner).into_py()?;
    Ok((
        PyCalibrator {
            inner: fit.calibrator,
        },
        fit.warnings,
    ))
}

/// Weighted-average fusion of named calibrated matrices. Equal weights
/// unless a name-to-weight mapping is given.
#[pyfunction]
#[pyo3(signature = (inputs, weights=None))]
fn fuse(
    inputs: Vec<(String, PyScoreMatrix)>,
    weights: Option<BTreeMap<String, f64>>,
) -> PyResult<PyScoreMatrix> {
    let config = match weights {
        Some(map) => fusion::FusionConfig::new(map.into_iter().collect()).into_py()?,
        None => {
            let names: Vec<String> = inputs.iter().map(|(n, _)| n.clone()).collect();
            fusion::default_config(&names).into_py()?
        }
    };
    let fusion_inputs: Vec<fusion::FusionInput> = inputs
        .iter()
        .map(|(name, m)| fusion::FusionInput::new(name, &m.inner))
        .collect();
    Ok(PyScoreMatrix {
        inner: fusion::fuse(&fusion_inputs, &config).into_py()?,
    })
}

/// Per-query top-1 predictions as (db_index, identity, score) tuples.
#[pyfunction]
fn rank_top1(
    scores: &PyScoreMatrix,
    db_catalog: &PyItemCatalog,
) -> PyResult<Vec<(usize, String, f64)>> {
    let predictions = retrieval::rank_top1(&scores.inner, &db_catalog.inner).into_py()?;
    Ok(predictions
        .into_iter()
        .map(|p| (p.db_index, p.identity, p.score))
        .collect())
}

/// Top-1 accuracy of per-query predicted database indices.
#[pyfunction]
fn top1_accuracy(
    predicted_db_indices: Vec<usize>,
    query_catalog: &PyItemCatalog,
    db_catalog: &PyItemCatalog,
) -> PyResult<f64> {
    let predictions: Vec<retrieval::Prediction> = predicted_db_indices
        .into_iter()
        .enumerate()
        .map(|(q, d)| {
            if d >= db_catalog.inner.len() {
                return Err(PyValueError::new_err(format!(
                    "prediction {d} outside database of {}",
                    db_catalog.inner.len()
                )));
            }
            Ok(retrieval::Prediction {
                query_index: q,
                db_index: d,
                identity: db_catalog.inner.identity(d).to_string(),
                score: 0.0,
            })
        })
        .collect::<PyResult<_>>()?;
    retrieval::top1_accuracy(&predictions, &query_catalog.inner, &db_catalog.inner).into_py()
}

/// Shortlist re-ranking: filter by the cheap score, re-rank the top
/// `budget` candidates by the expensive score. Returns per-query
/// (db_index, identity, score) plus the evaluations spent per query.
#[pyfunction]
fn shortlist_rerank(
    cheap: &PyScoreMatrix,
    expensive: &PyScoreMatrix,
    budget: usize,
    db_catalog: &PyItemCatalog,
) -> PyResult<(Vec<(usize, String, f64)>, usize)> {
    let budget = retrieval::Budget::new(budget).into_py()?;
    let expensive_inner = &expensive.inner;
    let outcome = retrieval::shortlist_rerank(
        &cheap.inner,
        |q, d| Ok(expensive_inner.get(q, d)),
        budget,
        &db_catalog.inner,
    )
    .into_py()?;
    Ok((
        outcome
            .predictions
            .into_iter()
            .map(|p| (p.db_index, p.identity, p.score))
            .collect(),
        outcome.evaluations_per_query,
    ))
}

/// Grid-search mu on the validation split; returns the best mu and the
/// (mu, accuracy-or-None) evaluations.
#[pyfunction]
#[pyo3(signature = (records, query_catalog, db_catalog, validation, grid=None, method="isotonic_pchip"))]
fn tune_mu(
    records: &PyMatchRecordSet,
    query_catalog: &PyItemCatalog,
    db_catalog: &PyItemCatalog,
    validation: Vec<usize>,
    grid: Option<Vec<f64>>,
    method: &str,
) -> PyResult<(f64, Vec<(f64, Option<f64>)>)> {
    let grid = grid.unwrap_or_else(retrieval::default_mu_grid);
    let outcome = retrieval::tune_mu(
        &records.inner,
        &query_catalog.inner,
        &db_catalog.inner,
        &validation,
        &grid,
        parse_method(method)?,
    )
    .into_py()?;
    Ok((
        outcome.best_mu,
        outcome
            .evaluations
            .into_iter()
            .map(|e| (e.mu, e.accuracy))
            .collect(),
    ))
}

#[pyfunction]
fn subsample_calibration_set(
    query_catalog: &PyItemCatalog,
    db_catalog: &PyItemCatalog,
    validation: Vec<usize>,
    n_items: usize,
    seed: u64,
) -> PyResult<Vec<usize>> {
    retrieval::subsample_calibration_set(
        &query_catalog.inner,
        &db_catalog.inner,
        &validation,
        n_items,
        seed,
    )
    .into_py()
}

#[pyfunction]
fn default_mu_grid() -> Vec<f64> {
    retrieval::default_mu_grid()
}

#[pyfunction]
fn derive_seed(root: u64, label: &str) -> u64 {
    fusecal_core::seeds::derive_seed(root, label)
}

/// Generate the synthetic benchmark dataset; returns the written paths.
#[pyfunction]
#[pyo3(signature = (out_dir, identities=20, items=8, dims=16, sigma=0.25, delta=0.3, seed=42))]
fn generate_synthetic(
    out_dir: PathBuf,
    identities: usize,
    items: usize,
    dims: usize,
    sigma: f64,
    delta: f64,
    seed: u64,
) -> PyResult<BTreeMap<String, String>> {
    let params = io::SynthParams {
        n_identities: identities,
        items_per_identity: items,
        dims,
        noise_sigma: sigma,
        separation_delta: delta,
        seed,
    };
    let paths = io::generate_synthetic(&params, &out_dir).into_py()?;
    let mut map = BTreeMap::new();
    map.insert("query_labels".into(), paths.query_labels.display().to_string());
    map.insert(
        "database_labels".into(),
        paths.database_labels.display().to_string(),
    );
    map.insert(
        "query_embeddings".into(),
        paths.query_embeddings.display().to_string(),
    );
    map.insert(
        "database_embeddings".into(),
        paths.database_embeddings.display().to_string(),
    );
    map.insert("matches".into(), paths.matches.display().to_string());
    map.insert("config".into(), paths.config.display().to_string());
    Ok(map)
}

/// Run the full pipeline from a config file; writes the report artifacts
/// and returns a summary dictionary.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir, seed=None, mu=None, budget=None, calibration=None, zero_shot=None))]
#[allow(clippy::too_many_arguments)]
fn run_config(
    py: Python<'_>,
    config_path: PathBuf,
    out_dir: PathBuf,
    seed: Option<u64>,
    mu: Option<f64>,
    budget: Option<usize>,
    calibration: Option<String>,
    zero_shot: Option<PathBuf>,
) -> PyResult<Py<PyAny>> {
    let (config, base) = io::load_config(&config_path).into_py()?;
    let overrides = io::ConfigOverrides {
        seed,
        mu,
        budget,
        calibration: calibration.as_deref().map(parse_method).transpose()?,
        zero_shot_dir: zero_shot,
    };
    let (inputs, options) = config.assemble(&base, &overrides).into_py()?;
    let outcome = pipeline::run_pipeline(&inputs, &options).into_py()?;

    std::fs::create_dir_all(&out_dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
    if options.zero_shot.is_none() {
        let cal_dir = out_dir.join("calibrators");
        std::fs::create_dir_all(&cal_dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
        for (name, calibrator) in &outcome.calibrators {
            calibrator
                .save(&cal_dir.join(format!("{name}.calib.json")))
                .into_py()?;
        }
    }
    let report = io::build_report(
        &outcome,
        &inputs.split,
        options.seed,
        options.calibration.name(),
        None,
    );
    io::emit_report(
        &report,
        &outcome,
        &inputs.query_catalog,
        &inputs.db_catalog,
        &out_dir,
    )
    .into_py()?;

    let summary = pyo3::types::PyDict::new(py);
    summary.set_item("fused_accuracy", outcome.fused_accuracy)?;
    summary.set_item(
        "per_score_accuracy",
        outcome.diagnostics.per_score_accuracy.clone(),
    )?;
    summary.set_item("chosen_mu", outcome.diagnostics.chosen_mu.clone())?;
    summary.set_item("warnings", outcome.diagnostics.warnings.clone())?;
    summary.set_item("n_test", inputs.split.test().len())?;
    summary.set_item("n_validation", inputs.split.validation().len())?;
    Ok(summary.into_any().unbind())
}

#[pymodule]
fn fusecal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyItemCatalog>()?;
    m.add_class::<PyEmbeddingMatrix>()?;
    m.add_class::<PyMatchRecordSet>()?;
    m.add_class::<PyScoreMatrix>()?;
    m.add_class::<PyPairLabelSet>()?;
    m.add_class::<PyCalibrator>()?;
    m.add_class::<PySplitSpec>()?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(global_score_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(local_match_count, m)?)?;
    m.add_function(wrap_pyfunction!(local_score_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(build_pair_labels, m)?)?;
    m.add_function(wrap_pyfunction!(make_split, m)?)?;
    m.add_function(wrap_pyfunction!(fit_calibrator, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(rank_top1, m)?)?;
    m.add_function(wrap_pyfunction!(top1_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(shortlist_rerank, m)?)?;
    m.add_function(wrap_pyfunction!(tune_mu, m)?)?;
    m.add_function(wrap_pyfunction!(subsample_calibration_set, m)?)?;
    m.add_function(wrap_pyfunction!(default_mu_grid, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
