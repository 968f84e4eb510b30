//! Python bindings for the batchqa harness: corpus loading and generation,
//! grouping, prompt rendering, response parsing and scoring.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::path::PathBuf;

use batchqa::corpus::{self, Judgment, Navigation};
use batchqa::dataset_builder;
use batchqa::error::Error;
use batchqa::grouping::{self, QuestionGroup, SamplerConfig};
use batchqa::llm_backend::{Backend, MockOracle};
use batchqa::metrics::{self, NavLabel, NavigationPair};
use batchqa::parser::{self, ParseMode, ParseStatus};
use batchqa::prompt::{render_prompt, RenderOptions};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Corpus")]
struct PyCorpus {
    inner: corpus::Corpus,
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    fn load(transcripts: PathBuf, questions: PathBuf, references: PathBuf) -> PyResult<Self> {
        let inner = corpus::load_corpus(&transcripts, &questions, &references).map_err(to_py_err)?;
        Ok(PyCorpus { inner })
    }

    #[staticmethod]
    fn synthetic(n_transcripts: usize, m_min: u32, m_max: u32, questions: usize, seed: u64) -> Self {
        PyCorpus {
            inner: batchqa::fixture::synthetic_corpus(n_transcripts, m_min..=m_max, questions, seed),
        }
    }

    #[getter]
    fn transcript_count(&self) -> usize {
        self.inner.transcripts.len()
    }

    #[getter]
    fn question_count(&self) -> usize {
        self.inner.questions.len()
    }

    #[getter]
    fn reference_count(&self) -> usize {
        self.inner.references.len()
    }

    /// Token-count percentiles {25, 50, 75, 95} using the whitespace counter.
    fn token_percentiles(&self) -> PyResult<std::collections::BTreeMap<u8, usize>> {
        let stats = corpus::compute_token_stats(&self.inner, &corpus::WhitespaceCounter)
            .map_err(to_py_err)?;
        Ok(stats.percentiles)
    }

    /// One group of exactly n referenced questions per transcript.
    fn eval_groups(&self, n: usize, seed: u64) -> PyResult<Vec<(String, Vec<String>)>> {
        let groups = grouping::make_eval_groups(&self.inner, n, seed).map_err(to_py_err)?;
        Ok(groups
            .into_iter()
            .map(|g| (g.transcript_id, g.question_ids))
            .collect())
    }

    fn render_prompt(&self, transcript_id: &str, question_ids: Vec<String>) -> PyResult<String> {
        let transcript = self
            .inner
            .transcript(transcript_id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown transcript {transcript_id:?}")))?;
        let group = QuestionGroup {
            transcript_id: transcript_id.to_string(),
            question_ids,
        };
        let prompt = render_prompt(transcript, &self.inner, &group, &RenderOptions::default())
            .map_err(to_py_err)?;
        Ok(prompt.text)
    }

    /// The mock oracle's exact answer text for a question group.
    fn oracle_response(&self, transcript_id: &str, question_ids: Vec<String>) -> PyResult<String> {
        let transcript = self
            .inner
            .transcript(transcript_id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown transcript {transcript_id:?}")))?;
        let group = QuestionGroup {
            transcript_id: transcript_id.to_string(),
            question_ids,
        };
        let prompt = render_prompt(transcript, &self.inner, &group, &RenderOptions::default())
            .map_err(to_py_err)?;
        let oracle = MockOracle::from_corpus(&self.inner, "oracle");
        Ok(oracle.complete(&prompt).map_err(to_py_err)?.raw_text)
    }

    #[pyo3(signature = (out, seed, n_max=10, k_min=5))]
    fn export_training_set(
        &self,
        out: PathBuf,
        seed: u64,
        n_max: usize,
        k_min: usize,
    ) -> PyResult<usize> {
        let config = SamplerConfig { seed, k_min, n_max };
        let manifest =
            dataset_builder::export_training_set(&self.inner, &config, &out).map_err(to_py_err)?;
        Ok(manifest.records)
    }

    fn export_eval_manifest(&self, out: PathBuf, n_list: Vec<usize>, seed: u64) -> PyResult<usize> {
        let entries = dataset_builder::export_eval_manifest(&self.inner, &n_list, seed, &out)
            .map_err(to_py_err)?;
        Ok(entries.len())
    }
}

/// First balanced JSON object region in the text, or None.
#[pyfunction]
fn extract_json(raw_text: &str) -> Option<String> {
    parser::extract_json(raw_text).map(str::to_string)
}

#[pyfunction]
#[pyo3(signature = (raw_text, n, mode="strict"))]
fn parse_response<'py>(
    py: Python<'py>,
    raw_text: &str,
    n: usize,
    mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let mode = match mode {
        "strict" => ParseMode::Strict,
        "lenient" => ParseMode::Lenient,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let outcome = parser::parse_response_with_mode(raw_text, n, mode);
    let result = PyDict::new(py);
    result.set_item(
        "status",
        match outcome.status {
            ParseStatus::Ok => "ok",
            ParseStatus::DecodeError => "decode_error",
        },
    )?;
    result.set_item(
        "error_class",
        outcome.error_class.map(|c| format!("{c:?}")),
    )?;
    let answers = PyDict::new(py);
    for (position, answer) in &outcome.answers {
        let entry = PyDict::new(py);
        entry.set_item("judgment", answer.judgment.to_string())?;
        entry.set_item("justification", &answer.justification)?;
        match answer.navigation {
            Some(Navigation::Index(i)) => entry.set_item("navigation", i)?,
            Some(Navigation::Na) => entry.set_item("navigation", "NA")?,
            None => entry.set_item("navigation", py.None())?,
        }
        answers.set_item(position, entry)?;
    }
    result.set_item("answers", answers)?;
    let anomalies = PyList::new(
        py,
        outcome.anomalies.iter().map(|a| format!("{a:?}")),
    )?;
    result.set_item("anomalies", anomalies)?;
    Ok(result)
}

fn judgment_from_str(s: &str) -> PyResult<Judgment> {
    match s {
        "Yes" | "yes" => Ok(Judgment::Yes),
        "No" | "no" => Ok(Judgment::No),
        other => Err(PyValueError::new_err(format!("judgment must be Yes/No, got {other:?}"))),
    }
}

fn nav_from_py(value: &Bound<'_, PyAny>) -> PyResult<NavLabel> {
    if value.is_none() {
        return Ok(NavLabel::Unanswered);
    }
    if let Ok(i) = value.extract::<u32>() {
        return Ok(NavLabel::Index(i));
    }
    if let Ok(s) = value.extract::<String>() {
        if s.eq_ignore_ascii_case("na") {
            return Ok(NavLabel::Na);
        }
    }
    Err(PyValueError::new_err(
        "navigation label must be a positive int, \"NA\", or None",
    ))
}

/// Accuracy over (reference, predicted) judgment pairs; predicted None counts
/// as incorrect.
#[pyfunction]
fn judgment_accuracy(pairs: Vec<(String, Option<String>)>) -> PyResult<f64> {
    let pairs: Vec<(Judgment, Option<Judgment>)> = pairs
        .iter()
        .map(|(r, p)| {
            Ok((
                judgment_from_str(r)?,
                p.as_deref().map(judgment_from_str).transpose()?,
            ))
        })
        .collect::<PyResult<_>>()?;
    metrics::judgment_accuracy(&pairs).map_err(to_py_err)
}

fn nav_pairs(pairs: &Bound<'_, PyList>) -> PyResult<Vec<NavigationPair>> {
    pairs
        .iter()
        .map(|item| {
            let (reference, predicted): (Bound<'_, PyAny>, Bound<'_, PyAny>) = item.extract()?;
            Ok(NavigationPair {
                reference: nav_from_py(&reference)?,
                predicted: nav_from_py(&predicted)?,
            })
        })
        .collect()
}

/// (mae, pairs_used) over pairs where both sides are numeric.
#[pyfunction]
fn navigation_mae(pairs: &Bound<'_, PyList>) -> PyResult<(f64, usize)> {
    Ok(metrics::navigation_mae(&nav_pairs(pairs)?))
}

/// Macro-averaged F1 treating each index and NA as classes.
#[pyfunction]
fn navigation_f1(pairs: &Bound<'_, PyList>) -> PyResult<f64> {
    metrics::navigation_f1(&nav_pairs(pairs)?).map_err(to_py_err)
}

#[pymodule]
fn batchqa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_function(wrap_pyfunction!(extract_json, m)?)?;
    m.add_function(wrap_pyfunction!(parse_response, m)?)?;
    m.add_function(wrap_pyfunction!(judgment_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(navigation_mae, m)?)?;
    m.add_function(wrap_pyfunction!(navigation_f1, m)?)?;
    Ok(())
}
