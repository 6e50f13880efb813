//! Python bindings for the `cultural-har` core.
//!
//! Structured results (reports, manifests, classifications) cross the
//! boundary as plain dicts and lists decoded from the core's JSON forms.

use std::collections::{BTreeMap, HashMap};

use har::evaluation::{
    compare_regimes, enumerate_folds, partition_subsets, run_experiment as run_core,
    ExperimentResult, TagTable,
};
use har::model::cultural_tag_distribution as distribution;
use har::synthetic::{generate, GeneratorSpec};
use har::{
    ActivityModel as CoreModel, ConfusionMatrix, DatasetManifest, PartitionProtocol, PriorMode,
    Regime, TagSet, TrainingConfig, TrainingExample,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyModule;

fn err(e: har::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn regime(code: &str) -> PyResult<Regime> {
    code.parse().map_err(err)
}

fn tagset(image_id: &str, tags: &[String]) -> PyResult<TagSet> {
    TagSet::from_texts(image_id, tags).map_err(err)
}

fn protocol(subsets_per_class: usize, subset_size: Option<usize>) -> PartitionProtocol {
    PartitionProtocol {
        subsets_per_class,
        subset_size,
    }
}

fn table(tags: HashMap<String, Vec<String>>) -> PyResult<TagTable> {
    tags.into_iter()
        .map(|(id, texts)| Ok((id.clone(), tagset(&id, &texts)?)))
        .collect()
}

/// Bernoulli Naive Bayes activity model over semantic (and cultural) tags.
#[pyclass(name = "ActivityModel", module = "cultural_har", frozen)]
struct ActivityModel {
    inner: CoreModel,
}

#[pymethods]
impl ActivityModel {
    /// Trains from `(tags, class_label, cultural_label)` triples.
    ///
    /// With `cultural_injection`, every example must carry a cultural label
    /// from `culture_registry`.
    #[staticmethod]
    #[pyo3(signature = (examples, smoothing_alpha=1.0, prior_mode="uniform", cultural_injection=false, culture_registry=Vec::new()))]
    fn train(
        examples: Vec<(Vec<String>, String, Option<String>)>,
        smoothing_alpha: f64,
        prior_mode: &str,
        cultural_injection: bool,
        culture_registry: Vec<String>,
    ) -> PyResult<Self> {
        let prior_mode = match prior_mode {
            "uniform" => PriorMode::Uniform,
            "empirical" => PriorMode::Empirical,
            other => {
                return Err(PyValueError::new_err(format!(
                    "prior_mode must be `uniform` or `empirical`, got `{other}`"
                )))
            }
        };
        let config = TrainingConfig {
            smoothing_alpha,
            prior_mode,
            cultural_injection,
            culture_registry,
        };
        let examples = examples
            .into_iter()
            .enumerate()
            .map(|(i, (tags, class, culture))| {
                Ok(TrainingExample::new(tagset(&format!("example-{i}"), &tags)?, class, culture))
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = CoreModel::train(&examples, &config).map_err(err)?;
        Ok(ActivityModel { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(ActivityModel {
            inner: CoreModel::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes().to_vec()
    }

    #[getter]
    fn priors(&self) -> Vec<f64> {
        self.inner.priors().to_vec()
    }

    /// Vocabulary tags in model order; cultural tags are prefixed `culture:`.
    #[getter]
    fn vocabulary(&self) -> Vec<String> {
        self.inner
            .vocabulary()
            .entries()
            .iter()
            .map(|t| {
                if t.is_cultural() {
                    format!("culture:{}", t.text())
                } else {
                    t.text().to_string()
                }
            })
            .collect()
    }

    #[getter]
    fn uses_cultural_tags(&self) -> bool {
        self.inner.uses_cultural_tags()
    }

    /// Classifies a list of tags. `profile` is required exactly when the
    /// model was trained with cultural tags. Returns a dict with
    /// `predicted_class`, `confidence`, `classes`, `posteriors` and
    /// `log_scores` (`None` for vetoed classes).
    #[pyo3(signature = (tags, profile=None))]
    fn classify<'py>(
        &self,
        py: Python<'py>,
        tags: Vec<String>,
        profile: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let set = tagset("input", &tags)?;
        let c = self.inner.classify_with_profile(&set, profile).map_err(err)?;
        to_py(py, &c)
    }

    fn __repr__(&self) -> String {
        format!(
            "ActivityModel(classes={:?}, vocabulary={}, cultural={})",
            self.inner.classes(),
            self.inner.vocabulary().len(),
            self.inner.uses_cultural_tags()
        )
    }
}

/// Fraction of `(image_id, culture)` pairs per registry culture.
#[pyfunction]
fn cultural_tag_distribution(examples: Vec<(String, String)>, registry: Vec<String>) -> PyResult<Vec<f64>> {
    distribution(&examples, &registry).map_err(err)
}

/// Superclass `(recall, precision)` for the member class indices of a
/// `counts[predicted][actual]` matrix.
#[pyfunction]
fn aggregate_superclass(counts: Vec<Vec<u64>>, members: Vec<usize>) -> PyResult<(Option<f64>, Option<f64>)> {
    let classes = (0..counts.len()).map(|i| format!("class-{i}")).collect();
    let matrix = ConfusionMatrix::from_counts(classes, counts).map_err(err)?;
    matrix.aggregate_superclass(&members).map_err(err)
}

/// Seeded subset partition and fold plan for a manifest (JSON text).
#[pyfunction]
#[pyo3(signature = (manifest, regime_code, seed, subsets_per_class=3, subset_size=Some(4)))]
fn fold_plan<'py>(
    py: Python<'py>,
    manifest: &str,
    regime_code: &str,
    seed: u64,
    subsets_per_class: usize,
    subset_size: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let manifest = DatasetManifest::from_json(manifest).map_err(err)?;
    let parts = partition_subsets(
        &manifest,
        regime(regime_code)?,
        protocol(subsets_per_class, subset_size),
        seed,
    )
    .map_err(err)?;
    to_py(py, &enumerate_folds(parts).map_err(err)?)
}

/// Generates a synthetic dataset from a spec (JSON text). Returns
/// `(manifest_json, {image_id: [tags]})`.
#[pyfunction]
#[pyo3(signature = (spec, seed=None))]
fn synthesize(spec: &str, seed: Option<u64>) -> PyResult<(String, BTreeMap<String, Vec<String>>)> {
    let mut spec = GeneratorSpec::from_json(spec).map_err(err)?;
    if let Some(seed) = seed {
        spec = spec.with_seed(seed);
    }
    let data = generate(&spec).map_err(err)?;
    let tags = data
        .fixtures
        .iter()
        .map(|f| (f.image_id.clone(), f.raw_tags.iter().map(|t| t.text.clone()).collect()))
        .collect();
    Ok((data.manifest.to_json().map_err(err)?, tags))
}

/// Runs the subset/fold experiment for each regime code and returns
/// `{"reports": {code: report}, "logs": {code: [entry]}, "comparison": ...}`;
/// `comparison` is `None` for a single regime.
#[pyfunction]
#[pyo3(signature = (manifest, tags, regimes=vec!["CU".to_string(), "CAT".to_string(), "CATT".to_string()], seed=0, smoothing_alpha=1.0, subsets_per_class=3, subset_size=Some(4)))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    manifest: &str,
    tags: HashMap<String, Vec<String>>,
    regimes: Vec<String>,
    seed: u64,
    smoothing_alpha: f64,
    subsets_per_class: usize,
    subset_size: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let manifest = DatasetManifest::from_json(manifest).map_err(err)?;
    let tags = table(tags)?;
    let config = TrainingConfig {
        smoothing_alpha,
        ..TrainingConfig::default()
    };
    let superclasses = manifest.superclasses();
    let mut reports = BTreeMap::new();
    let mut logs = BTreeMap::new();
    let mut results: Vec<ExperimentResult> = Vec::new();
    for code in &regimes {
        let regime = regime(code)?;
        let parts = partition_subsets(&manifest, regime, protocol(subsets_per_class, subset_size), seed)
            .map_err(err)?;
        let plan = enumerate_folds(parts).map_err(err)?;
        let result = py
            .detach(|| run_core(&manifest, regime, &config, &plan, &tags))
            .map_err(err)?;
        reports.insert(regime.code(), result.report(&plan, &superclasses));
        logs.insert(regime.code(), result.log.clone());
        results.push(result);
    }
    let comparison = if results.len() > 1 {
        let refs: Vec<&ExperimentResult> = results.iter().collect();
        Some(compare_regimes(&refs, &superclasses).map_err(err)?)
    } else {
        None
    };
    to_py(
        py,
        &serde_json::json!({"reports": reports, "logs": logs, "comparison": comparison}),
    )
}

#[pymodule]
fn cultural_har(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", har::VERSION)?;
    m.add_class::<ActivityModel>()?;
    m.add_function(wrap_pyfunction!(cultural_tag_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_superclass, m)?)?;
    m.add_function(wrap_pyfunction!(fold_plan, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
