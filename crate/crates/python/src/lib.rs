//! Python module `pscf_lab`: profiles, rules, embeddings, preservation search,
//! losses and the rule-learning MLP.

use std::path::PathBuf;

use pscf_core::experiments::{self, LearnedRule, TrainConfig};
use pscf_core::losses;
use pscf_core::nn::{self, CheckpointMeta};
use pscf_core::preservation;
use pscf_core::profiles::{self, Ballot};
use pscf_core::{EmbeddingKind, Error, Lottery, RuleId};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rule_of(name: &str) -> PyResult<RuleId> {
    name.parse().map_err(err)
}

fn embedding_of(name: &str) -> PyResult<EmbeddingKind> {
    name.parse().map_err(err)
}

fn lottery_of(probs: Vec<f64>) -> PyResult<Lottery> {
    Lottery::new(probs).map_err(err)
}

/// Converts any serializable value through JSON into plain Python objects.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A preference profile: one strict ranking (best first) per voter.
#[pyclass(name = "Profile", module = "pscf_lab", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyProfile {
    inner: profiles::Profile,
}

#[pymethods]
impl PyProfile {
    #[new]
    fn new(num_candidates: usize, rankings: Vec<Vec<usize>>) -> PyResult<Self> {
        let inner = profiles::Profile::from_rankings(num_candidates, rankings).map_err(err)?;
        Ok(PyProfile { inner })
    }

    /// Parses the `a,b,c;b,c,a` line format.
    #[staticmethod]
    fn from_line(num_candidates: usize, line: &str) -> PyResult<Self> {
        let inner = profiles::Profile::parse_line(num_candidates, line).map_err(err)?;
        Ok(PyProfile { inner })
    }

    fn to_line(&self) -> String {
        self.inner.to_line()
    }

    #[getter]
    fn num_candidates(&self) -> usize {
        self.inner.num_candidates()
    }

    #[getter]
    fn num_voters(&self) -> usize {
        self.inner.num_voters()
    }

    fn rankings(&self) -> Vec<Vec<usize>> {
        self.inner.ballots().iter().map(|b| b.ranking().to_vec()).collect()
    }

    fn remove_voter(&self, voter: usize) -> PyResult<Self> {
        let inner = self.inner.remove_voter(voter).map_err(err)?;
        Ok(PyProfile { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.num_voters()
    }

    fn __repr__(&self) -> String {
        format!("Profile({}, '{}')", self.inner.num_candidates(), self.inner.to_line())
    }
}

#[pyfunction]
#[pyo3(signature = (m, n, seed=0))]
fn generate_impartial_culture(m: usize, n: usize, seed: u64) -> PyResult<PyProfile> {
    let inner = profiles::generate_impartial_culture(m, n, seed).map_err(err)?;
    Ok(PyProfile { inner })
}

/// `count` impartial-culture profiles, the same ones `pscf-lab gen` writes.
#[pyfunction]
#[pyo3(signature = (m, n, count, seed=0))]
fn generate_profiles(m: usize, n: usize, count: usize, seed: u64) -> PyResult<Vec<PyProfile>> {
    let ps = experiments::generate_profiles(m, n, count, seed).map_err(err)?;
    Ok(ps.into_iter().map(|inner| PyProfile { inner }).collect())
}

#[pyfunction]
fn rules() -> Vec<&'static str> {
    RuleId::ALL.iter().map(|r| r.name()).collect()
}

#[pyfunction]
fn embeddings() -> Vec<&'static str> {
    EmbeddingKind::ALL.iter().map(|e| e.label()).collect()
}

#[pyfunction]
fn apply_rule(rule: &str, profile: &PyProfile) -> PyResult<Vec<f64>> {
    Ok(pscf_core::apply_rule(rule_of(rule)?, &profile.inner).into_vec())
}

#[pyfunction]
fn condorcet_winner(profile: &PyProfile) -> Option<usize> {
    pscf_core::rules::condorcet_winner(&profile.inner)
}

/// The `m x m` embedding as nested lists; counts unless `normalized`.
#[pyfunction]
#[pyo3(signature = (profile, embedding, normalized=false))]
fn embed(profile: &PyProfile, embedding: &str, normalized: bool) -> PyResult<Vec<Vec<f64>>> {
    let kind = embedding_of(embedding)?;
    let mut e = pscf_core::embed(kind, &profile.inner);
    if normalized {
        e = pscf_core::normalize(&e, profile.inner.num_voters()).map_err(err)?;
    }
    let m = e.num_candidates();
    Ok(e.entries().chunks(m).map(<[f64]>::to_vec).collect())
}

#[pyfunction]
fn features(profile: &PyProfile, embedding: &str) -> PyResult<Vec<f64>> {
    Ok(pscf_core::features(embedding_of(embedding)?, &profile.inner))
}

/// `None` when the pair is not a counterexample, else a dict describing it.
#[pyfunction]
fn check_pair(py: Python<'_>, rule: &str, embedding: &str, a: &PyProfile, b: &PyProfile) -> PyResult<Py<PyAny>> {
    let found = preservation::check_pair(rule_of(rule)?, embedding_of(embedding)?, &a.inner, &b.inner).map_err(err)?;
    to_py(py, &found)
}

#[pyfunction]
#[pyo3(signature = (rule, embedding, m, n, budget=1_000_000))]
fn search_counterexample(
    py: Python<'_>,
    rule: &str,
    embedding: &str,
    m: usize,
    n: usize,
    budget: u64,
) -> PyResult<Py<PyAny>> {
    let (rule, emb) = (rule_of(rule)?, embedding_of(embedding)?);
    let outcome = py
        .detach(|| preservation::search_counterexample(rule, emb, m, n, budget))
        .map_err(err)?;
    to_py(py, &outcome)
}

#[pyfunction]
fn verify_reference_pairs(py: Python<'_>) -> PyResult<Py<PyAny>> {
    let verdicts = py.detach(preservation::verify_reference_pairs).map_err(err)?;
    to_py(py, &verdicts)
}

#[pyfunction]
fn l1_loss(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    Ok(losses::l1_loss(&lottery_of(p)?, &lottery_of(q)?).map_err(err)?.value)
}

/// Zero when `p` stochastically dominates `q` under `sigma`, else the largest prefix gap.
#[pyfunction]
fn sd_loss(p: Vec<f64>, sigma: Vec<usize>, q: Vec<f64>) -> PyResult<f64> {
    let sigma = Ballot::new(sigma).map_err(err)?;
    Ok(losses::sd_loss(&lottery_of(p)?, &sigma, &lottery_of(q)?).value)
}

#[pyfunction]
fn participation_loss(rule: &str, profile: &PyProfile) -> PyResult<f64> {
    let rule = rule_of(rule)?;
    let f = |p: &profiles::Profile| pscf_core::apply_rule(rule, p);
    Ok(losses::participation_loss(&f, &profile.inner).map_err(err)?.value)
}

/// The rule-learning MLP, optionally tagged with the rule and embedding it learned.
#[pyclass(name = "Model", module = "pscf_lab")]
struct PyModel {
    inner: nn::MlpModel,
    meta: Option<CheckpointMeta>,
}

#[pymethods]
impl PyModel {
    /// Fresh model for `m` candidates (input `m*m`, five hidden layers of 120).
    #[new]
    #[pyo3(signature = (m, seed=0))]
    fn new(m: usize, seed: u64) -> PyResult<Self> {
        Ok(PyModel {
            inner: nn::MlpModel::for_candidates(m, seed).map_err(err)?,
            meta: None,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, meta) = nn::load_model(&path).map_err(err)?;
        Ok(PyModel { inner, meta: Some(meta) })
    }

    #[pyo3(signature = (path, rule, embedding, seed=0, epoch=0))]
    fn save(&self, path: PathBuf, rule: &str, embedding: &str, seed: u64, epoch: usize) -> PyResult<()> {
        let meta = CheckpointMeta {
            rule: rule_of(rule)?,
            embedding: embedding_of(embedding)?,
            m: self.inner.output_dim(),
            seed,
            epoch,
        };
        nn::save_model(&path, &self.inner, meta).map_err(err)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    #[getter]
    fn layer_dims(&self) -> Vec<usize> {
        self.inner.layer_dims()
    }

    #[getter]
    fn rule(&self) -> Option<&'static str> {
        self.meta.as_ref().map(|m| m.rule.name())
    }

    #[getter]
    fn embedding(&self) -> Option<&'static str> {
        self.meta.as_ref().map(|m| m.embedding.label())
    }

    fn predict(&self, features: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.predict(&features).map_err(err)?.into_vec())
    }

    /// Lottery for a raw profile; `embedding` defaults to the one the model was trained on.
    #[pyo3(signature = (profile, embedding=None))]
    fn predict_profile(&self, profile: &PyProfile, embedding: Option<&str>) -> PyResult<Vec<f64>> {
        let kind = match (embedding, &self.meta) {
            (Some(e), _) => embedding_of(e)?,
            (None, Some(meta)) => meta.embedding,
            (None, None) => return Err(PyValueError::new_err("untagged model: pass an embedding")),
        };
        self.predict(pscf_core::features(kind, &profile.inner))
    }

    /// Participation loss of the learned rule on one profile.
    #[pyo3(signature = (profile, embedding=None))]
    fn participation_loss(&self, profile: &PyProfile, embedding: Option<&str>) -> PyResult<f64> {
        let kind = match (embedding, &self.meta) {
            (Some(e), _) => embedding_of(e)?,
            (None, Some(meta)) => meta.embedding,
            (None, None) => return Err(PyValueError::new_err("untagged model: pass an embedding")),
        };
        if profile.inner.num_candidates() != self.inner.output_dim() {
            return Err(PyValueError::new_err("profile size does not match the model"));
        }
        let learned = LearnedRule {
            model: &self.inner,
            embedding: kind,
        };
        Ok(losses::participation_loss(&learned, &profile.inner).map_err(err)?.value)
    }

    fn __repr__(&self) -> String {
        match &self.meta {
            Some(m) => format!("Model({}/{}, m={})", m.rule, m.embedding, m.m),
            None => format!("Model(layers={:?})", self.inner.layer_dims()),
        }
    }
}

/// Trains from a config dict (same keys as the `train` JSON config); returns
/// `(report, model)`.
#[pyfunction]
fn train(py: Python<'_>, config: &Bound<'_, PyAny>) -> PyResult<(Py<PyAny>, PyModel)> {
    let text: String = py.import("json")?.call_method1("dumps", (config,))?.extract()?;
    let config = TrainConfig::from_json(&text).map_err(err)?;
    let (report, inner) = py.detach(|| experiments::train(&config)).map_err(err)?;
    let meta = report.checkpoint_meta();
    Ok((to_py(py, &report)?, PyModel { inner, meta: Some(meta) }))
}

#[pymodule]
fn pscf_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProfile>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_impartial_culture, m)?)?;
    m.add_function(wrap_pyfunction!(generate_profiles, m)?)?;
    m.add_function(wrap_pyfunction!(rules, m)?)?;
    m.add_function(wrap_pyfunction!(embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(apply_rule, m)?)?;
    m.add_function(wrap_pyfunction!(condorcet_winner, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(features, m)?)?;
    m.add_function(wrap_pyfunction!(check_pair, m)?)?;
    m.add_function(wrap_pyfunction!(search_counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(verify_reference_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(l1_loss, m)?)?;
    m.add_function(wrap_pyfunction!(sd_loss, m)?)?;
    m.add_function(wrap_pyfunction!(participation_loss, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
