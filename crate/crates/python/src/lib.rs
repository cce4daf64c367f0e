//! Python bindings. Matrices cross the boundary as lists of row lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use totseg::dataio::{generate_synthetic, CatalogOptions, DatasetCatalog, SyntheticSpec};
use totseg::decode::{decode_probabilities, segments_from_labels, viterbi_fixed_order};
use totseg::eval::{self, EvalOptions, OverlapCriterion, VideoLabels};
use totseg::numerics::Matrix;
use totseg::trainer::{self, segment_video, TrainedModel};
use totseg::transport;
use totseg::{Checkpoint, Error, RunConfig};

fn to_py(e: Error) -> PyErr {
    match &e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ if e.is_numerical() => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    if rows.is_empty() || cols == 0 {
        return Err(PyValueError::new_err("matrix must be non-empty"));
    }
    Ok(Matrix::from_rows(&rows))
}

fn overlap(name: &str) -> PyResult<OverlapCriterion> {
    name.parse().map_err(to_py)
}

/// Temporal prior T (B × K) with width `sigma`.
#[pyfunction]
fn temporal_prior(b: usize, k: usize, sigma: f64) -> PyResult<Vec<Vec<f64>>> {
    if b == 0 || k == 0 || sigma.is_nan() || sigma <= 0.0 {
        return Err(PyValueError::new_err("b and k must be positive and sigma > 0"));
    }
    Ok(transport::temporal_prior(b, k, sigma).to_rows())
}

/// Entropic transport codes on the equal-partition polytope.
#[pyfunction]
#[pyo3(signature = (scores, epsilon, iterations = 3, tolerance = 0.0))]
fn sinkhorn_ot(scores: Vec<Vec<f64>>, epsilon: f64, iterations: usize, tolerance: f64) -> PyResult<Vec<Vec<f64>>> {
    let q = transport::sinkhorn_ot(&matrix(scores)?, epsilon, iterations, tolerance).map_err(to_py)?;
    Ok(q.values.to_rows())
}

/// Temporal transport codes with prior `prior`.
#[pyfunction]
#[pyo3(signature = (scores, prior, rho, iterations = 3, tolerance = 0.0))]
fn sinkhorn_tot(
    scores: Vec<Vec<f64>>,
    prior: Vec<Vec<f64>>,
    rho: f64,
    iterations: usize,
    tolerance: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let s = matrix(scores)?;
    let t = matrix(prior)?;
    if s.shape() != t.shape() {
        return Err(PyValueError::new_err("scores and prior shapes differ"));
    }
    let q = transport::sinkhorn_tot(&s, &t, rho, iterations, tolerance).map_err(to_py)?;
    Ok(q.values.to_rows())
}

/// Best ordered path through `log_probs` (F × K); returns `(labels, score)`.
#[pyfunction]
fn viterbi(log_probs: Vec<Vec<f64>>) -> PyResult<(Vec<usize>, f64)> {
    let out = viterbi_fixed_order(&matrix(log_probs)?).map_err(to_py)?;
    Ok((out.labels, out.log_score))
}

/// Ordered decoding of per-frame probabilities.
#[pyfunction]
fn decode(probs: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    Ok(decode_probabilities(&matrix(probs)?).map_err(to_py)?.labels)
}

/// `(label, start, end)` runs, end exclusive.
#[pyfunction]
fn segments(labels: Vec<usize>) -> Vec<(usize, usize, usize)> {
    segments_from_labels(&labels).into_iter().map(|s| (s.label, s.start, s.end)).collect()
}

/// One cluster → action assignment; returns `(assignment, matched_frames)`.
#[pyfunction]
#[pyo3(signature = (pred, gt, background = None))]
fn hungarian_match(
    pred: Vec<usize>,
    gt: Vec<usize>,
    background: Option<usize>,
) -> PyResult<(Vec<Option<usize>>, usize)> {
    let m = eval::hungarian_match(&pred, &gt, background).map_err(to_py)?;
    Ok((m.assignment, m.matched_frames))
}

/// Frame accuracy of already mapped predictions.
#[pyfunction]
#[pyo3(signature = (pred, gt, background = None))]
fn mof(pred: Vec<usize>, gt: Vec<usize>, background: Option<usize>) -> PyResult<f64> {
    if pred.len() != gt.len() {
        return Err(PyValueError::new_err("pred and gt lengths differ"));
    }
    Ok(eval::mof(&pred, &gt, background))
}

/// Segmental F1 of already mapped per-frame labels.
#[pyfunction]
#[pyo3(signature = (pred, gt, overlap = "gt"))]
fn f1(pred: Vec<usize>, gt: Vec<usize>, overlap: &str) -> PyResult<f64> {
    let crit = self::overlap(overlap)?;
    Ok(eval::f1_score(&segments_from_labels(&pred), &segments_from_labels(&gt), crit).f1)
}

/// Activity-level evaluation of `[(pred, gt), …]`; returns a dict.
#[pyfunction]
#[pyo3(signature = (videos, background = None, overlap = "gt"))]
fn evaluate<'py>(
    py: Python<'py>,
    videos: Vec<(Vec<usize>, Vec<usize>)>,
    background: Option<usize>,
    overlap: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let videos: Vec<VideoLabels> = videos
        .into_iter()
        .enumerate()
        .map(|(i, (predicted, ground_truth))| VideoLabels { video_id: i.to_string(), predicted, ground_truth })
        .collect();
    let options = EvalOptions { background, overlap: self::overlap(overlap)? };
    let r = eval::evaluate_activity(&videos, options).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("mof", r.mof)?;
    d.set_item("f1", r.f1)?;
    d.set_item("mapping", r.mapping.assignment)?;
    d.set_item("matched_frames", r.mapping.matched_frames)?;
    d.set_item("total_frames", r.mapping.total_frames)?;
    d.set_item("per_video_f1", r.per_video.iter().map(|v| v.f1).collect::<Vec<_>>())?;
    Ok(d)
}

/// Videos of one activity.
#[pyclass(module = "totseg_py", name = "Dataset", frozen)]
struct PyDataset {
    inner: DatasetCatalog,
}

#[pymethods]
impl PyDataset {
    /// Ordered synthetic activity with Gaussian frames around per-action means.
    #[staticmethod]
    #[pyo3(signature = (k = 5, videos = 20, dim = 16, segment_len = 60, jitter = 0.3, separation = 10.0,
                        noise = 1.0, permute_prob = 0.0, drop_prob = 0.0, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn synthetic(
        k: usize,
        videos: usize,
        dim: usize,
        segment_len: usize,
        jitter: f64,
        separation: f64,
        noise: f64,
        permute_prob: f64,
        drop_prob: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = SyntheticSpec {
            num_videos: videos,
            num_actions: k,
            dim,
            mean_segment_len: segment_len,
            len_jitter: jitter,
            cluster_separation: separation,
            noise_sigma: noise,
            permute_prob,
            drop_prob,
            seed,
        };
        Ok(Self { inner: generate_synthetic(&spec).map_err(to_py)? })
    }

    /// Opens `root/<activity>` written in the on-disk dataset layout.
    #[staticmethod]
    #[pyo3(signature = (root, activity, background = None, split_background = false))]
    fn open(root: PathBuf, activity: &str, background: Option<String>, split_background: bool) -> PyResult<Self> {
        let options = CatalogOptions { background, split_background };
        Ok(Self { inner: DatasetCatalog::open(&root, activity, &options).map_err(to_py)? })
    }

    fn write(&self, root: PathBuf) -> PyResult<()> {
        self.inner.write_to(&root).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn activity(&self) -> String {
        self.inner.activity.clone()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.num_actions
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn video_ids(&self) -> Vec<String> {
        self.inner.videos.iter().map(|v| v.video_id.clone()).collect()
    }

    fn features(&self, index: usize) -> PyResult<Vec<Vec<f64>>> {
        self.check(index)?;
        Ok(self.inner.load_video(index).map_err(to_py)?.features.to_rows())
    }

    fn labels(&self, index: usize) -> PyResult<Option<Vec<usize>>> {
        self.check(index)?;
        self.inner.labels(index).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(activity={:?}, videos={}, actions={}, dim={})",
            self.inner.activity,
            self.inner.len(),
            self.inner.num_actions,
            self.inner.dim
        )
    }
}

impl PyDataset {
    fn check(&self, index: usize) -> PyResult<()> {
        if index < self.inner.len() {
            Ok(())
        } else {
            Err(PyIndexError::new_err(format!("video index {index} out of range")))
        }
    }
}

/// Trained encoder and prototypes.
#[pyclass(module = "totseg_py", name = "Model", frozen)]
struct PyModel {
    inner: TrainedModel,
    losses: Vec<f64>,
}

#[pymethods]
impl PyModel {
    /// Trains on `dataset`. `config` maps configuration keys (as in a config
    /// file) to values, e.g. `{"mode": "tot", "iterations": 500}`.
    #[staticmethod]
    #[pyo3(signature = (dataset, config = None))]
    fn train(py: Python<'_>, dataset: &PyDataset, config: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut overrides = Vec::new();
        if let Some(d) = config {
            for (k, v) in d.iter() {
                overrides.push((k.extract::<String>()?, v.str()?.to_string()));
            }
        }
        let cfg = RunConfig::resolve(None, &overrides).map_err(to_py)?;
        let (inner, log) = py.detach(|| trainer::train(&dataset.inner, &cfg.train)).map_err(to_py)?;
        Ok(Self { inner, losses: log.records.iter().map(|r| r.total).collect() })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(to_py)?;
        Ok(Self { inner: TrainedModel::from_checkpoint(ck), losses: Vec::new() })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.checkpoint().save(&path).map_err(to_py)
    }

    /// Total loss per training iteration (empty for loaded models).
    #[getter]
    fn losses(&self) -> Vec<f64> {
        self.losses.clone()
    }

    #[getter]
    fn num_clusters(&self) -> usize {
        self.inner.num_clusters()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    /// Frame-to-cluster probabilities for a feature matrix.
    fn probabilities(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(features)?;
        if x.cols() != self.inner.input_dim() {
            return Err(PyValueError::new_err(format!(
                "expected {} feature columns, got {}",
                self.inner.input_dim(),
                x.cols()
            )));
        }
        Ok(self.inner.probabilities(&x).to_rows())
    }

    /// Ordered cluster labels for video `index` of `dataset`.
    fn segment(&self, dataset: &PyDataset, index: usize) -> PyResult<Vec<usize>> {
        dataset.check(index)?;
        if dataset.inner.dim != self.inner.input_dim() {
            return Err(PyValueError::new_err("dataset and model feature dimensions differ"));
        }
        Ok(segment_video(&self.inner, &dataset.inner, index).map_err(to_py)?.labels)
    }
}

#[pymodule]
fn totseg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(temporal_prior, m)?)?;
    m.add_function(wrap_pyfunction!(sinkhorn_ot, m)?)?;
    m.add_function(wrap_pyfunction!(sinkhorn_tot, m)?)?;
    m.add_function(wrap_pyfunction!(viterbi, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(segments, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian_match, m)?)?;
    m.add_function(wrap_pyfunction!(mof, m)?)?;
    m.add_function(wrap_pyfunction!(f1, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    Ok(())
}
