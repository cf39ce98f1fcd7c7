//! Python bindings for `climd_core`.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use climd_core::distribution as dist;
use climd_core::{
    metrics, scheduler, simlab, ClimdError, DifficultyOrder, DifficultyRecord, DifficultyTable, ModalityOutput,
    SampleTrace,
};

create_exception!(climd, Error, PyValueError);

fn err(e: ClimdError) -> PyErr {
    Error::new_err(e.to_string())
}

fn parse_order(order: &str) -> PyResult<DifficultyOrder> {
    order.parse().map_err(err)
}

/// Confidence of one modality in the true class, in (0, 0.5].
#[pyfunction]
fn intra_modal_confidence(probs: Vec<f64>, label: usize) -> PyResult<f64> {
    climd_core::intra_modal_confidence(&probs, label).map_err(err)
}

#[pyfunction]
fn pairwise_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    climd_core::pairwise_similarity(&a, &b).map_err(err)
}

/// One minus the mean pairwise cosine similarity, in [0, 2].
#[pyfunction]
fn complementarity(embeddings: Vec<Vec<f64>>) -> PyResult<f64> {
    climd_core::complementarity(&embeddings).map_err(err)
}

/// Scores samples given per-sample, per-modality probabilities and
/// embeddings. Returns `(sample_id, label, psi, phi, r)` tuples.
#[pyfunction]
fn score(
    sample_ids: Vec<String>,
    labels: Vec<usize>,
    probs: Vec<Vec<Vec<f64>>>,
    embeddings: Vec<Vec<Vec<f64>>>,
) -> PyResult<Vec<(String, usize, Vec<f64>, f64, f64)>> {
    let n = sample_ids.len();
    if labels.len() != n || probs.len() != n || embeddings.len() != n {
        return Err(Error::new_err("sample_ids, labels, probs and embeddings must have equal length"));
    }
    let traces: Vec<SampleTrace> = sample_ids
        .into_iter()
        .zip(labels)
        .zip(probs.into_iter().zip(embeddings))
        .map(|((sample_id, label), (p, e))| SampleTrace {
            sample_id,
            label,
            modalities: p
                .into_iter()
                .zip(e)
                .map(|(probs, embedding)| ModalityOutput { probs, embedding })
                .collect(),
        })
        .collect();
    let table = climd_core::measurer::score_dataset_par(&traces).map_err(err)?;
    Ok(table
        .records
        .into_iter()
        .map(|r| (r.sample_id, r.label, r.psi, r.phi, r.r))
        .collect())
}

/// Returns `("fitted", alpha_hat)` or `("degenerate_balanced", fallback)`.
#[pyfunction]
#[pyo3(signature = (counts, gamma = dist::DEFAULT_GAMMA, alpha_balanced = None))]
fn fit_alpha(counts: Vec<u64>, gamma: f64, alpha_balanced: Option<f64>) -> PyResult<(&'static str, f64)> {
    let fallback = alpha_balanced.unwrap_or_else(|| dist::balanced_fallback(gamma));
    Ok(match dist::fit_alpha(&counts, gamma, fallback).map_err(err)? {
        dist::AlphaFit::Fitted { alpha_hat } => ("fitted", alpha_hat),
        dist::AlphaFit::DegenerateBalanced { fallback } => ("degenerate_balanced", fallback),
    })
}

#[pyfunction]
fn powerlaw_pdf(n: f64, n_min: f64, gamma: f64, alpha: f64) -> PyResult<f64> {
    dist::powerlaw_pdf(n, n_min, gamma, alpha).map_err(err)
}

#[pyfunction]
fn alpha_schedule(t: usize, epochs: usize, alpha_cap: f64) -> PyResult<f64> {
    dist::alpha_schedule(t, epochs, alpha_cap).map_err(err)
}

#[pyfunction]
fn subset_size(t: usize, epochs: usize, n: u64) -> u64 {
    dist::subset_size(t, epochs, n)
}

/// Largest-remainder integer allocation of `total` in proportion to
/// `weights`, optionally capped per entry.
#[pyfunction]
#[pyo3(signature = (weights, total, caps = None))]
fn apportion(weights: Vec<f64>, total: u64, caps: Option<Vec<u64>>) -> PyResult<Vec<u64>> {
    let caps = caps.unwrap_or_else(|| vec![total; weights.len()]);
    climd_core::apportion(&weights, total, &caps).map_err(err)
}

/// Class sizes with their fitted power-law exponent.
#[pyclass(name = "ClassDistribution", module = "climd", frozen)]
struct PyClassDistribution {
    inner: climd_core::ClassDistribution,
}

#[pymethods]
impl PyClassDistribution {
    #[new]
    #[pyo3(signature = (counts, gamma = dist::DEFAULT_GAMMA, alpha_balanced = None))]
    fn new(counts: Vec<u64>, gamma: f64, alpha_balanced: Option<f64>) -> PyResult<Self> {
        let inner = match alpha_balanced {
            Some(a) => climd_core::ClassDistribution::with_fallback(counts, gamma, a),
            None => climd_core::ClassDistribution::from_counts(counts, gamma),
        }
        .map_err(err)?;
        Ok(PyClassDistribution { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (labels, num_classes, gamma = dist::DEFAULT_GAMMA))]
    fn from_labels(labels: Vec<usize>, num_classes: usize, gamma: f64) -> PyResult<Self> {
        let inner = climd_core::ClassDistribution::from_labels(&labels, num_classes, gamma).map_err(err)?;
        Ok(PyClassDistribution { inner })
    }

    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.inner.counts().to_vec()
    }

    #[getter]
    fn total(&self) -> u64 {
        self.inner.total()
    }

    #[getter]
    fn n_min(&self) -> u64 {
        self.inner.n_min()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[getter]
    fn alpha_cap(&self) -> f64 {
        self.inner.alpha_cap()
    }

    #[getter]
    fn degenerate(&self) -> bool {
        self.inner.fit().is_degenerate()
    }

    #[getter]
    fn classes_by_rank(&self) -> Vec<usize> {
        self.inner.classes_by_rank().to_vec()
    }

    fn rank_of(&self, class_id: usize) -> PyResult<usize> {
        if class_id >= self.inner.num_classes() {
            return Err(Error::new_err(format!("class {class_id} out of range")));
        }
        Ok(self.inner.rank_of(class_id))
    }

    /// `(alpha_t, q_t by rank, S_t)` for epoch `t` of `epochs`.
    fn epoch_target(&self, t: usize, epochs: usize) -> PyResult<(f64, Vec<f64>, u64)> {
        let e = dist::epoch_target(t, epochs, self.inner.total(), &self.inner).map_err(err)?;
        Ok((e.alpha_t, e.q, e.subset_size))
    }

    fn __repr__(&self) -> String {
        format!(
            "ClassDistribution(counts={:?}, gamma={}, alpha_cap={})",
            self.inner.counts(),
            self.inner.gamma(),
            self.inner.alpha_cap()
        )
    }
}

/// Per-epoch training subsets.
#[pyclass(name = "Schedule", module = "climd", frozen)]
struct PySchedule {
    inner: scheduler::Schedule,
}

impl PySchedule {
    fn plan(&self, epoch: usize) -> PyResult<&scheduler::EpochPlan> {
        epoch
            .checked_sub(1)
            .and_then(|i| self.inner.epochs.get(i))
            .ok_or_else(|| Error::new_err(format!("epoch {epoch} out of range 1..={}", self.inner.num_epochs())))
    }
}

#[pymethods]
impl PySchedule {
    #[getter]
    fn num_epochs(&self) -> usize {
        self.inner.num_epochs()
    }

    #[getter]
    fn total_visits(&self) -> u64 {
        self.inner.total_visits()
    }

    /// Subset sizes by class rank for a 1-based epoch.
    fn counts_by_rank(&self, epoch: usize) -> PyResult<Vec<u64>> {
        Ok(self.plan(epoch)?.counts_by_rank())
    }

    fn counts_by_class(&self, epoch: usize) -> PyResult<Vec<u64>> {
        Ok(self.plan(epoch)?.counts_by_class())
    }

    /// Sample ids selected in a 1-based epoch.
    fn sample_ids(&self, epoch: usize) -> PyResult<Vec<String>> {
        Ok(self.plan(epoch)?.order.clone())
    }

    fn __len__(&self) -> usize {
        self.inner.num_epochs()
    }
}

/// Builds the curriculum from per-sample difficulty scores.
#[pyfunction]
#[pyo3(signature = (sample_ids, labels, r, distribution, epochs, order = "larger-is-easier"))]
fn build_schedule(
    sample_ids: Vec<String>,
    labels: Vec<usize>,
    r: Vec<f64>,
    distribution: &PyClassDistribution,
    epochs: usize,
    order: &str,
) -> PyResult<PySchedule> {
    if labels.len() != sample_ids.len() || r.len() != sample_ids.len() {
        return Err(Error::new_err("sample_ids, labels and r must have equal length"));
    }
    let table = DifficultyTable {
        records: sample_ids
            .into_iter()
            .zip(labels)
            .zip(r)
            .map(|((sample_id, label), r)| DifficultyRecord {
                sample_id,
                label,
                psi: Vec::new(),
                phi: r,
                r,
            })
            .collect(),
    };
    let config = scheduler::ScheduleConfig {
        epochs,
        order: parse_order(order)?,
    };
    let inner = scheduler::build_schedule(&table, &distribution.inner, &config).map_err(err)?;
    Ok(PySchedule { inner })
}

/// The ten-class, ten-epoch reference schedule: `(counts by rank per epoch,
/// target probabilities per epoch)`.
#[pyfunction]
fn figure2() -> PyResult<(Vec<Vec<u64>>, Vec<Vec<f64>>)> {
    let (schedule, targets) = climd_core::cli::figure2().map_err(err)?;
    Ok((schedule.epochs.iter().map(|p| p.counts_by_rank()).collect(), targets))
}

/// Accuracy, weighted F1 and macro F1 of integer predictions.
#[pyfunction]
#[pyo3(signature = (truth, predicted, num_classes = None))]
fn scores<'py>(
    py: Python<'py>,
    truth: Vec<usize>,
    predicted: Vec<usize>,
    num_classes: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let c = num_classes.unwrap_or_else(|| truth.iter().chain(&predicted).max().map_or(0, |m| m + 1));
    let cm = metrics::confusion(&truth, &predicted, c).map_err(err)?;
    let s = metrics::Scores::from_confusion(&cm).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("accuracy", s.accuracy)?;
    out.set_item("weighted_f1", s.weighted_f1)?;
    out.set_item("macro_f1", s.macro_f1)?;
    out.set_item("confusion", cm.rows())?;
    Ok(out)
}

/// Runs the synthetic curriculum-vs-random comparison.
#[pyfunction]
#[pyo3(signature = (seeds = 10, epochs = 20, learning_rate = 0.02, n = 2000, seed = 0, order = "larger-is-easier"))]
fn simulate<'py>(
    py: Python<'py>,
    seeds: usize,
    epochs: usize,
    learning_rate: f64,
    n: usize,
    seed: u64,
    order: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let defaults = simlab::ExperimentConfig::default();
    let config = simlab::ExperimentConfig {
        spec: simlab::SyntheticSpec { n, seed, ..defaults.spec },
        train: simlab::TrainConfig {
            learning_rate,
            epochs,
            order: parse_order(order)?,
            ..defaults.train
        },
        n_seeds: seeds,
        ..defaults
    };
    let report = py.detach(|| simlab::run_experiment(&config)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("curriculum_macro_f1", report.mean_curriculum.macro_f1)?;
    out.set_item("random_macro_f1", report.mean_baseline.macro_f1)?;
    out.set_item("curriculum_accuracy", report.mean_curriculum.accuracy)?;
    out.set_item("random_accuracy", report.mean_baseline.accuracy)?;
    out.set_item("curriculum_wins", report.curriculum_wins)?;
    out.set_item("seeds", report.seeds.len())?;
    out.set_item("csv", report.to_csv())?;
    Ok(out)
}

#[pymodule]
fn climd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("Error", m.py().get_type::<Error>())?;
    m.add_class::<PyClassDistribution>()?;
    m.add_class::<PySchedule>()?;
    m.add_function(wrap_pyfunction!(intra_modal_confidence, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(complementarity, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(fit_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(powerlaw_pdf, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(subset_size, m)?)?;
    m.add_function(wrap_pyfunction!(apportion, m)?)?;
    m.add_function(wrap_pyfunction!(build_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(figure2, m)?)?;
    m.add_function(wrap_pyfunction!(scores, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
