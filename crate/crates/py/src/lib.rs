//! Python bindings for the realsim toolkit: text metrics, distribution
//! comparison, annotation output parsers, and the end-to-end pipeline.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use realsim::annotate;
use realsim::compare;
use realsim::corpus;
use realsim::pipeline;
use realsim::textmetrics;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts a serde_json value into native Python objects.
fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        serde_json::Value::Null => py.None().into_bound(py),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, val) in map {
                dict.set_item(k, json_to_py(py, val)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize_to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(value_err)?;
    json_to_py(py, &value)
}

// ---------------------------------------------------------------------------
// Text metrics
// ---------------------------------------------------------------------------

#[pyfunction]
fn tokenize_words(text: &str) -> Vec<String> {
    textmetrics::tokenize_words(text)
}

#[pyfunction]
fn split_sentences(text: &str) -> Vec<String> {
    textmetrics::split_sentences(text)
}

#[pyfunction]
fn count_syllables(word: &str) -> usize {
    textmetrics::count_syllables(word)
}

#[pyfunction]
fn flesch_kincaid_grade(text: &str) -> PyResult<f64> {
    textmetrics::flesch_kincaid_grade(text).map_err(value_err)
}

/// Bidirectional MTLD over a token sequence. Returns None where the measure
/// is undefined (no completed factor in either direction).
#[pyfunction]
fn mtld(tokens: Vec<String>) -> PyResult<Option<f64>> {
    match textmetrics::mtld(&tokens) {
        Ok(v) => Ok(Some(v)),
        Err(textmetrics::MetricsError::UndefinedMtld) => Ok(None),
        Err(e) => Err(value_err(e)),
    }
}

// ---------------------------------------------------------------------------
// Distribution comparison
// ---------------------------------------------------------------------------

/// Total variation distance between two aligned count vectors.
#[pyfunction]
fn tvd(counts_a: Vec<usize>, counts_b: Vec<usize>) -> PyResult<f64> {
    if counts_a.len() != counts_b.len() {
        return Err(PyValueError::new_err("count vectors must have equal length"));
    }
    let categories: Vec<String> = (0..counts_a.len()).map(|i| format!("c{i}")).collect();
    let p = compare::CategoricalDistribution::from_counts("py", &categories, &counts_a)
        .map_err(value_err)?;
    let q = compare::CategoricalDistribution::from_counts("py", &categories, &counts_b)
        .map_err(value_err)?;
    compare::tvd(&p, &q).map_err(value_err)
}

/// Wasserstein-1 distance between two integer sample multisets.
#[pyfunction]
fn wasserstein1(a: Vec<u64>, b: Vec<u64>) -> PyResult<f64> {
    compare::wasserstein1(&a, &b).map_err(value_err)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    compare::pearson(&x, &y).map_err(value_err)
}

/// Semantic similarity between two sets of statement embeddings.
/// `mode` is "symmetric_mean_of_max" (default) or "centroid_cosine".
#[pyfunction]
#[pyo3(signature = (real, sim, mode = "symmetric_mean_of_max"))]
fn knowledge_similarity(real: Vec<Vec<f64>>, sim: Vec<Vec<f64>>, mode: &str) -> PyResult<f64> {
    let mode = match mode {
        "symmetric_mean_of_max" => compare::KnowledgeAggregation::SymmetricMeanOfMax,
        "centroid_cosine" => compare::KnowledgeAggregation::CentroidCosine,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    compare::knowledge_similarity(&real, &sim, mode).map_err(value_err)
}

// ---------------------------------------------------------------------------
// Annotation output parsers
// ---------------------------------------------------------------------------

/// Parses a tag-assignment response into one tag list per user turn.
#[pyfunction]
fn parse_intent_tags(text: &str, n_turns: usize) -> PyResult<Vec<Vec<String>>> {
    let (sets, _warnings) = annotate::parse_intent_step2(text, n_turns).map_err(value_err)?;
    Ok(sets.into_iter().map(|s| s.tags).collect())
}

#[pyfunction]
fn parse_feedback_tags(text: &str, n_turns: usize) -> PyResult<Vec<Vec<String>>> {
    let (tags, _warnings) = annotate::parse_feedback(text, n_turns).map_err(value_err)?;
    Ok(tags.into_iter().map(|t| t.tags).collect())
}

/// Parses identity category lines into {category_key: [quotes]}.
#[pyfunction]
fn parse_identity<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let (record, _warnings) = annotate::parse_identity(text).map_err(value_err)?;
    serialize_to_py(py, &record.categories)
}

/// Parses knowledge bullets into (knows, gaps) statement lists.
#[pyfunction]
fn parse_knowledge(text: &str) -> (Vec<String>, Vec<String>) {
    let (stmts, _warnings) = annotate::parse_knowledge(text);
    (stmts.knows, stmts.gaps)
}

// ---------------------------------------------------------------------------
// Corpus and pipeline
// ---------------------------------------------------------------------------

/// Loads a JSONL dialogue file; returns (dialogues, rejections) as plain
/// Python structures.
#[pyfunction]
fn load_dialogues<'py>(py: Python<'py>, path: &str) -> PyResult<Bound<'py, PyAny>> {
    let set = corpus::load_dialogues(std::path::Path::new(path), None).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("dialogues", serialize_to_py(py, &set.dialogues)?)?;
    out.set_item("rejections", serialize_to_py(py, &set.rejections)?)?;
    Ok(out.into_any())
}

/// Runs the full pipeline from a TOML config; returns the run manifest.
#[pyfunction]
#[pyo3(signature = (config_path, resume = false, seed = None))]
fn run_pipeline<'py>(
    py: Python<'py>,
    config_path: &str,
    resume: bool,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg =
        pipeline::RunConfig::load(std::path::Path::new(config_path)).map_err(value_err)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let manifest = pipeline::run_pipeline(&cfg, resume).map_err(value_err)?;
    serialize_to_py(py, &manifest)
}

/// The 16 experimental domains as (key, display name) pairs.
#[pyfunction]
fn domains() -> Vec<(String, String)> {
    corpus::DOMAINS
        .iter()
        .map(|(k, label)| (k.to_string(), label.to_string()))
        .collect()
}

#[pymodule]
fn realsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tokenize_words, m)?)?;
    m.add_function(wrap_pyfunction!(split_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(count_syllables, m)?)?;
    m.add_function(wrap_pyfunction!(flesch_kincaid_grade, m)?)?;
    m.add_function(wrap_pyfunction!(mtld, m)?)?;
    m.add_function(wrap_pyfunction!(tvd, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein1, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(knowledge_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(parse_intent_tags, m)?)?;
    m.add_function(wrap_pyfunction!(parse_feedback_tags, m)?)?;
    m.add_function(wrap_pyfunction!(parse_identity, m)?)?;
    m.add_function(wrap_pyfunction!(parse_knowledge, m)?)?;
    m.add_function(wrap_pyfunction!(load_dialogues, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(domains, m)?)?;
    m.add("END_TOKEN", realsim::simulate::END_TOKEN)?;
    Ok(())
}
