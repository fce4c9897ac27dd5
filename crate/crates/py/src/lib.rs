//! Python bindings: `import edim`.
//!
//! Configs go in as plain dicts (same keys as the CLI config file) and
//! matrices as `list[list[float]]`.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use edim::baselines::{self, ManifoldConfig};
use edim::checkpoint;
use edim::data::{self, StsPair, SyntheticSpec};
use edim::eval::{self, Embedder, EncoderOutput, PoolerOutput, SourceTag, StsSet};
use edim::model::ModelConfig;
use edim::numeric::Matrix;
use edim::objectives;
use edim::training::{self, TrainConfig, TrainedBundle, TrainingCorpus};
use edim::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Numerical(_) | Error::Disconnected { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrRaise<T> {
    fn or_raise(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for edim::Result<T> {
    fn or_raise(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

/// Round-trips a dict through JSON so the Rust-side defaults and unknown-key
/// checks apply exactly as they do for config files.
fn from_dict<T: DeserializeOwned + Default>(d: Option<&Bound<'_, PyDict>>) -> PyResult<T> {
    let Some(d) = d else {
        return Ok(T::default());
    };
    let text: String = d
        .py()
        .import("json")?
        .call_method1("dumps", (d,))?
        .extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_pyobj<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).or_raise()
}

fn sts_pairs(pairs: Vec<(String, String, f64)>) -> Vec<StsPair> {
    pairs
        .into_iter()
        .map(|(sentence_a, sentence_b, gold)| StsPair {
            sentence_a,
            sentence_b,
            gold,
        })
        .collect()
}

/// Whitespace vocabulary; ids 0..3 are `[PAD]`, `[CLS]`, `[UNK]`.
#[pyclass(module = "edim", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Vocab {
    inner: data::Vocab,
}

#[pymethods]
impl Vocab {
    #[new]
    fn new(words: Vec<String>) -> Self {
        Self {
            inner: data::Vocab::from_words(words),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: data::Vocab::load(&path).or_raise()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).or_raise()
    }

    fn tokens(&self) -> Vec<String> {
        self.inner.tokens().to_vec()
    }

    fn tokenize(&self, text: &str, max_len: usize) -> Vec<u32> {
        self.inner.tokenize(text, max_len)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(module = "edim", frozen)]
struct SyntheticData {
    inner: data::SyntheticData,
}

#[pymethods]
impl SyntheticData {
    #[getter]
    fn vocab(&self) -> Vocab {
        Vocab {
            inner: self.inner.vocab.clone(),
        }
    }

    #[getter]
    fn corpus(&self) -> Vec<String> {
        self.inner.corpus_texts()
    }

    #[getter]
    fn corpus_id(&self) -> String {
        self.inner.corpus_id()
    }

    /// `(sentence_a, sentence_b, gold)` triples.
    #[getter]
    fn validation(&self) -> Vec<(String, String, f64)> {
        flat_pairs(self.inner.validation_sts())
    }

    #[getter]
    fn test(&self) -> Vec<(String, String, f64)> {
        flat_pairs(self.inner.test_sts())
    }

    /// `(premise, hypothesis, label)` with 0 entailment, 1 neutral, 2 contradiction.
    #[getter]
    fn nli(&self) -> Vec<(String, String, usize)> {
        self.inner
            .nli
            .iter()
            .map(|t| (t.premise.clone(), t.hypothesis.clone(), t.label))
            .collect()
    }
}

fn flat_pairs(pairs: Vec<StsPair>) -> Vec<(String, String, f64)> {
    pairs
        .into_iter()
        .map(|p| (p.sentence_a, p.sentence_b, p.gold))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (spec=None))]
fn gen_synthetic(spec: Option<&Bound<'_, PyDict>>) -> PyResult<SyntheticData> {
    let spec: SyntheticSpec = from_dict(spec)?;
    Ok(SyntheticData {
        inner: data::gen_synthetic(&spec).or_raise()?,
    })
}

/// A trained encoder + pooler with its provenance and loss trace.
#[pyclass(module = "edim", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Bundle {
    inner: TrainedBundle,
}

impl Bundle {
    fn embedder(&self, source: &str) -> PyResult<Box<dyn Embedder + '_>> {
        match source.parse::<SourceTag>().or_raise()? {
            SourceTag::EncoderOutput => Ok(Box::new(EncoderOutput(&self.inner.model))),
            SourceTag::PoolerOutput => Ok(Box::new(PoolerOutput(&self.inner.model))),
            SourceTag::Baseline(_) => Err(PyValueError::new_err(
                "a checkpoint has no baseline embeddings",
            )),
        }
    }
}

#[pymethods]
impl Bundle {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: checkpoint::load_checkpoint(&path).or_raise()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save_checkpoint(&self.inner, &path).or_raise()
    }

    #[getter]
    fn pooler_dim(&self) -> usize {
        self.inner.pooler_dim()
    }

    #[getter]
    fn hidden_dim(&self) -> usize {
        self.inner.model.hidden_dim()
    }

    #[getter]
    fn max_len(&self) -> usize {
        self.inner.model.config.max_len
    }

    #[getter]
    fn loss_trace(&self) -> Vec<f64> {
        self.inner.loss_trace.clone()
    }

    #[getter]
    fn provenance<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_pyobj(py, &self.inner.provenance)
    }

    /// Embeds token-id sequences; `source` is `"pooler"` or `"encoder"`.
    #[pyo3(signature = (batch, source="pooler"))]
    fn embed(&self, py: Python<'_>, batch: Vec<Vec<u32>>, source: &str) -> PyResult<Vec<Vec<f64>>> {
        let embedder = self.embedder(source)?;
        let out = py.detach(|| embedder.embed(&batch)).or_raise()?;
        Ok(out.to_rows())
    }

    /// Spearman correlation between cosine similarities and gold scores.
    #[pyo3(signature = (pairs, vocab, source="pooler"))]
    fn evaluate_sts(
        &self,
        py: Python<'_>,
        pairs: Vec<(String, String, f64)>,
        vocab: &Vocab,
        source: &str,
    ) -> PyResult<f64> {
        let set = StsSet::new(
            "sts",
            &sts_pairs(pairs),
            &vocab.inner,
            self.inner.model.config.max_len,
        );
        let embedder = self.embedder(source)?;
        let result = py
            .detach(|| eval::evaluate_sts(embedder.as_ref(), &set))
            .or_raise()?;
        Ok(result.value)
    }
}

fn corpus(
    vocab: &Vocab,
    sentences: &[String],
    nli: Option<Vec<(String, String, usize)>>,
    max_len: usize,
) -> TrainingCorpus {
    let triples: Vec<data::NliTriple> = nli
        .unwrap_or_default()
        .into_iter()
        .map(|(premise, hypothesis, label)| data::NliTriple {
            premise,
            hypothesis,
            label,
        })
        .collect();
    TrainingCorpus::new("python", &vocab.inner, sentences, max_len).with_nli(
        &vocab.inner,
        &triples,
        max_len,
    )
}

#[pyfunction]
#[pyo3(signature = (sentences, vocab, model=None, train=None, nli=None))]
fn train_end_to_end(
    py: Python<'_>,
    sentences: Vec<String>,
    vocab: &Vocab,
    model: Option<&Bound<'_, PyDict>>,
    train: Option<&Bound<'_, PyDict>>,
    nli: Option<Vec<(String, String, usize)>>,
) -> PyResult<Bundle> {
    let mcfg: ModelConfig = from_dict(model)?;
    let tcfg: TrainConfig = from_dict(train)?;
    let corpus = corpus(vocab, &sentences, nli, mcfg.max_len);
    let inner = py
        .detach(|| training::train_end_to_end(&mcfg, &tcfg, &corpus))
        .or_raise()?;
    Ok(Bundle { inner })
}

#[pyclass(module = "edim", frozen)]
struct TwoStepResult {
    #[pyo3(get)]
    end_to_end: Py<Bundle>,
    #[pyo3(get)]
    candidates: Vec<Py<Bundle>>,
    #[pyo3(get)]
    step1: Py<Bundle>,
    #[pyo3(get)]
    step2: Py<Bundle>,
    #[pyo3(get)]
    selected_dim: usize,
    /// `(d′, encoder-output validation ρ)` in candidate order.
    #[pyo3(get)]
    scores: Vec<(usize, f64)>,
}

#[pyfunction]
#[pyo3(signature = (sentences, vocab, validation, target_dim, candidates, model=None, train=None, nli=None))]
#[allow(clippy::too_many_arguments)]
fn two_step_train(
    py: Python<'_>,
    sentences: Vec<String>,
    vocab: &Vocab,
    validation: Vec<(String, String, f64)>,
    target_dim: usize,
    candidates: Vec<usize>,
    model: Option<&Bound<'_, PyDict>>,
    train: Option<&Bound<'_, PyDict>>,
    nli: Option<Vec<(String, String, usize)>>,
) -> PyResult<TwoStepResult> {
    let mcfg: ModelConfig = from_dict(model)?;
    let tcfg: TrainConfig = from_dict(train)?;
    let corpus = corpus(vocab, &sentences, nli, mcfg.max_len);
    let set = StsSet::new(
        "validation",
        &sts_pairs(validation),
        &vocab.inner,
        mcfg.max_len,
    );
    let out = py
        .detach(|| training::two_step_train(&mcfg, &tcfg, &corpus, &set, target_dim, &candidates))
        .or_raise()?;
    let wrap = |b: TrainedBundle| Py::new(py, Bundle { inner: b });
    Ok(TwoStepResult {
        selected_dim: out.selection.dim,
        scores: out.selection.scores,
        end_to_end: wrap(out.end_to_end)?,
        candidates: out
            .candidates
            .into_iter()
            .map(wrap)
            .collect::<PyResult<_>>()?,
        step1: wrap(out.step1)?,
        step2: wrap(out.step2)?,
    })
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    eval::spearman(&x, &y).or_raise()
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    eval::pearson(&x, &y).or_raise()
}

#[pyfunction]
fn cosine(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    objectives::cosine(&u, &v).or_raise()
}

/// In-batch InfoNCE loss of `anchors` against `positives`.
#[pyfunction]
#[pyo3(signature = (anchors, positives, temperature=0.05))]
fn contrastive_loss(
    anchors: Vec<Vec<f64>>,
    positives: Vec<Vec<f64>>,
    temperature: f64,
) -> PyResult<f64> {
    let out = objectives::contrastive_loss(&matrix(anchors)?, &matrix(positives)?, temperature)
        .or_raise()?;
    Ok(out.loss)
}

/// Fits PCA on `x` and projects `y` (default `x`) onto the top `d` components.
#[pyfunction]
#[pyo3(signature = (x, d, y=None))]
fn pca(x: Vec<Vec<f64>>, d: usize, y: Option<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
    let x = matrix(x)?;
    let proj = baselines::pca_fit(&x, d).or_raise()?;
    let y = match y {
        Some(y) => matrix(y)?,
        None => x,
    };
    Ok(baselines::pca_apply(&proj, &y).or_raise()?.to_rows())
}

#[pyfunction]
#[pyo3(signature = (x, d, k_neighbors=12))]
fn isomap(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    d: usize,
    k_neighbors: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let x = matrix(x)?;
    let cfg = ManifoldConfig::new(k_neighbors, d);
    Ok(py
        .detach(|| baselines::isomap(&x, &cfg))
        .or_raise()?
        .to_rows())
}

#[pyfunction]
#[pyo3(signature = (x, d, k_neighbors=12, regularization=1e-3))]
fn lle(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    d: usize,
    k_neighbors: usize,
    regularization: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let x = matrix(x)?;
    let cfg = ManifoldConfig {
        lle_regularization: regularization,
        ..ManifoldConfig::new(k_neighbors, d)
    };
    Ok(py.detach(|| baselines::lle(&x, &cfg)).or_raise()?.to_rows())
}

#[pymodule]
#[pyo3(name = "edim")]
fn edim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Vocab>()?;
    m.add_class::<SyntheticData>()?;
    m.add_class::<Bundle>()?;
    m.add_class::<TwoStepResult>()?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(train_end_to_end, m)?)?;
    m.add_function(wrap_pyfunction!(two_step_train, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(contrastive_loss, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    m.add_function(wrap_pyfunction!(isomap, m)?)?;
    m.add_function(wrap_pyfunction!(lle, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_module<F: FnOnce(&Bound<'_, PyModule>)>(f: F) {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "edim").unwrap();
            edim_module(&m).unwrap();
            f(&m);
        });
    }

    #[test]
    fn spearman_is_exposed() {
        with_module(|m| {
            let rho: f64 = m
                .getattr("spearman")
                .unwrap()
                .call1((vec![1.0, 2.0, 3.0], vec![10.0, 30.0, 20.0]))
                .unwrap()
                .extract()
                .unwrap();
            assert!((rho - 0.5).abs() < 1e-12);
        });
    }

    #[test]
    fn errors_map_to_python_exceptions() {
        with_module(|m| {
            let err = m
                .getattr("spearman")
                .unwrap()
                .call1((vec![1.0, 1.0], vec![1.0, 2.0]))
                .unwrap_err();
            Python::attach(|py| assert!(err.is_instance_of::<PyValueError>(py)));
            let err = m
                .getattr("Bundle")
                .unwrap()
                .getattr("load")
                .unwrap()
                .call1(("/nonexistent/x.edim",))
                .unwrap_err();
            Python::attach(|py| assert!(err.is_instance_of::<PyOSError>(py)));
        });
    }

    #[test]
    fn config_dicts_reject_unknown_keys() {
        with_module(|m| {
            let py = m.py();
            let spec = PyDict::new(py);
            spec.set_item("topiks", 3).unwrap();
            let err = m
                .getattr("gen_synthetic")
                .unwrap()
                .call1((spec,))
                .unwrap_err();
            assert!(err.to_string().contains("topiks"));
        });
    }

    #[test]
    fn pca_projects_onto_the_leading_axis() {
        with_module(|m| {
            let x = vec![
                vec![-2.0, 0.1],
                vec![-1.0, -0.1],
                vec![1.0, 0.1],
                vec![2.0, -0.1],
            ];
            let out: Vec<Vec<f64>> = m
                .getattr("pca")
                .unwrap()
                .call1((x, 1))
                .unwrap()
                .extract()
                .unwrap();
            let abs: Vec<f64> = out.iter().map(|r| r[0].abs()).collect();
            assert!((abs[0] - 2.0).abs() < 0.01 && (abs[1] - 1.0).abs() < 0.01);
        });
    }
}
