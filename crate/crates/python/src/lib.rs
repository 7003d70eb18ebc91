//! Python bindings. Vectors and matrices cross the boundary as lists.

use std::path::PathBuf;

use codat_core::data::{gen_mixture_split, Dataset, MixtureSpec, Normalization, Provenance, Split};
use codat_core::dro;
use codat_core::metrics::{self, EvalReport};
use codat_core::nn::{self, Checkpoint, ModelParams};
use codat_core::train::{self, Method, TrainConfig};
use codat_core::{AmbiguityConfig, AttackConfig, ClassRiskVector, FecInputs, ProbabilityDistribution};
use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: codat_core::Error) -> PyErr {
    match e {
        codat_core::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for codat_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn ambiguity(k: usize, eta: f64, p0: Option<Vec<f64>>) -> PyResult<AmbiguityConfig> {
    match p0 {
        Some(p) => AmbiguityConfig::new(ProbabilityDistribution::new(p).py()?, eta).py(),
        None => AmbiguityConfig::uniform(k, eta).py(),
    }
}

fn dataset(x: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> PyResult<Dataset> {
    Dataset::new(
        matrix(x)?,
        labels,
        num_classes,
        Split::Train,
        Provenance::new("python", Normalization::Identity),
    )
    .py()
}

fn attack_config(epsilon: f64, step_size: f64, steps: usize, random_start: bool) -> PyResult<AttackConfig> {
    AttackConfig::new(epsilon, step_size, steps, random_start).py()
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("average_accuracy", r.average_accuracy)?;
    d.set_item("worst_class_accuracy", r.worst_class_accuracy)?;
    d.set_item("class_variance", r.class_variance)?;
    d.set_item("per_class_accuracy", r.per_class_accuracy.clone())?;
    d.set_item("class_counts", r.class_counts.clone())?;
    d.set_item("confusion", r.confusion.clone())?;
    d.set_item("attack", r.attack.clone())?;
    d.set_item("seed", r.seed)?;
    Ok(d)
}

/// Chi-square divergence sum (p - p0)^2 / p0.
#[pyfunction]
fn chi_square_divergence(p: Vec<f64>, p0: Vec<f64>) -> PyResult<f64> {
    dro::chi_square_divergence(
        &ProbabilityDistribution::new(p).py()?,
        &ProbabilityDistribution::new(p0).py()?,
    )
    .py()
}

/// Worst-case class distribution in the chi-square ball around `p0`
/// (uniform by default).
#[pyfunction]
#[pyo3(signature = (risks, eta, p0=None))]
fn worst_case_distribution<'py>(
    py: Python<'py>,
    risks: Vec<f64>,
    eta: f64,
    p0: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ambiguity(risks.len(), eta, p0)?;
    let sol = dro::worst_case_distribution(&ClassRiskVector::new(risks).py()?, &cfg).py()?;
    let d = PyDict::new(py);
    d.set_item("distribution", sol.distribution.weights().to_vec())?;
    d.set_item("objective", sol.objective_value)?;
    d.set_item("alpha_star", sol.alpha_star)?;
    d.set_item("closed_form_valid", sol.closed_form_valid)?;
    d.set_item("degenerate", sol.degenerate)?;
    Ok(d)
}

/// Mean plus sqrt(eta * variance) of the risks under `p0`.
#[pyfunction]
#[pyo3(signature = (risks, eta, p0=None))]
fn equivalent_objective(risks: Vec<f64>, eta: f64, p0: Option<Vec<f64>>) -> PyResult<f64> {
    let cfg = ambiguity(risks.len(), eta, p0)?;
    dro::equivalent_objective(&ClassRiskVector::new(risks).py()?, &cfg).py()
}

#[pyfunction]
#[pyo3(signature = (risks, eta, p0=None))]
fn equivalent_objective_gradient(risks: Vec<f64>, eta: f64, p0: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    let cfg = ambiguity(risks.len(), eta, p0)?;
    dro::equivalent_objective_gradient(&ClassRiskVector::new(risks).py()?, &cfg).py()
}

/// Brute-force maximizer; returns `(distribution, objective)`.
#[pyfunction]
#[pyo3(signature = (risks, eta, p0=None, iterations=dro::DEFAULT_ORACLE_ITERATIONS, step=dro::DEFAULT_ORACLE_STEP))]
fn oracle_worst_case(
    risks: Vec<f64>,
    eta: f64,
    p0: Option<Vec<f64>>,
    iterations: usize,
    step: f64,
) -> PyResult<(Vec<f64>, f64)> {
    let cfg = ambiguity(risks.len(), eta, p0)?;
    let (p, v) = dro::oracle_worst_case(&ClassRiskVector::new(risks).py()?, &cfg, iterations, step).py()?;
    Ok((p.into_vec(), v))
}

#[pyfunction]
fn simplex_project(v: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(dro::simplex_project(&v).py()?.into_vec())
}

/// Fairness Elasticity Coefficient against a baseline.
#[pyfunction]
fn fec(a_wc: f64, a_wc_baseline: f64, a_avg: f64, a_avg_baseline: f64) -> PyResult<f64> {
    Ok(metrics::fec(
        &FecInputs::new(a_wc, a_wc_baseline, a_avg, a_avg_baseline).py()?,
    ))
}

#[pyfunction]
fn class_variance(per_class_accuracy: Vec<f64>) -> f64 {
    metrics::class_variance(&per_class_accuracy)
}

/// The three-class Gaussian preset: `(x_train, y_train, x_test, y_test)`.
#[pyfunction]
#[pyo3(signature = (train_per_class=500, test_per_class=200, seed=0))]
#[allow(clippy::type_complexity)]
fn toy3(
    train_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>, Vec<usize>)> {
    let (train, test) = gen_mixture_split(&MixtureSpec::toy3(train_per_class, seed), test_per_class).py()?;
    Ok((
        rows(train.features()),
        train.labels().to_vec(),
        rows(test.features()),
        test.labels().to_vec(),
    ))
}

/// Multilayer perceptron with ReLU hidden layers.
#[pyclass(module = "codat", skip_from_py_object)]
#[derive(Clone)]
struct Model {
    inner: ModelParams,
}

#[pymethods]
impl Model {
    /// Seeded initialization; `dims` is `[input, hidden..., classes]`.
    #[new]
    #[pyo3(signature = (dims, seed=0))]
    fn new(dims: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: ModelParams::init(&dims, seed).py()?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Checkpoint::load(&path).py()?.to_model().py()?,
        })
    }

    #[pyo3(signature = (path, seed=0, config_hash=String::new()))]
    fn save(&self, path: PathBuf, seed: u64, config_hash: String) -> PyResult<()> {
        Checkpoint::from_model(&self.inner, seed, config_hash).save(&path).py()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims()
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    /// Flattened parameters: per layer, row-major weights then bias.
    fn parameters(&self) -> Vec<f64> {
        self.inner.flatten()
    }

    fn logits(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&nn::logits(&self.inner, matrix(x)?.view()).py()?))
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        metrics::predict(&self.inner, &matrix(x)?).py()
    }

    /// Per-example cross-entropy.
    fn loss(&self, x: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Vec<f64>> {
        let out = nn::logits(&self.inner, matrix(x)?.view()).py()?;
        nn::cross_entropy_per_example(&out, &labels).py()
    }

    /// PGD perturbation of `x` inside the l-infinity ball and `[0, 1]^d`.
    #[pyo3(signature = (x, labels, epsilon, step_size, steps, random_start=true, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn attack(
        &self,
        x: Vec<Vec<f64>>,
        labels: Vec<usize>,
        epsilon: f64,
        step_size: f64,
        steps: usize,
        random_start: bool,
        seed: u64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let batch = nn::LabeledBatch::new(matrix(x)?, labels, self.inner.num_classes()).py()?;
        let cfg = attack_config(epsilon, step_size, steps, random_start)?;
        Ok(rows(&codat_core::pgd_attack(&self.inner, &batch, &cfg, seed).py()?))
    }

    /// Natural accuracy report, or robust when `steps > 0`.
    #[pyo3(signature = (x, labels, epsilon=0.03, step_size=0.0075, steps=0, random_start=true, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        x: Vec<Vec<f64>>,
        labels: Vec<usize>,
        epsilon: f64,
        step_size: f64,
        steps: usize,
        random_start: bool,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let data = dataset(x, labels, self.inner.num_classes())?;
        let cfg = if steps > 0 {
            Some(attack_config(epsilon, step_size, steps, random_start)?)
        } else {
            None
        };
        report_dict(py, &metrics::evaluate(&self.inner, &data, cfg.as_ref(), seed).py()?)
    }

    fn __repr__(&self) -> String {
        format!("Model(dims={:?})", self.inner.dims())
    }
}

/// Train with the desk defaults, overridable by keyword. Returns
/// `(model, history)` where history is a list of per-epoch dicts.
#[pyfunction]
#[pyo3(signature = (
    x, labels, num_classes, method="codat", eta=0.3, epochs=60, hidden=vec![256, 256],
    batch_size=60, lr=0.1, epsilon=0.03, step_size=0.0075, steps=10, seed=0, fixed_weights=None
))]
#[allow(clippy::too_many_arguments)]
fn train_model<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    method: &str,
    eta: f64,
    epochs: usize,
    hidden: Vec<usize>,
    batch_size: usize,
    lr: f64,
    epsilon: f64,
    step_size: f64,
    steps: usize,
    seed: u64,
    fixed_weights: Option<Vec<f64>>,
) -> PyResult<(Model, Vec<Bound<'py, PyDict>>)> {
    let method: Method = method.parse().py()?;
    let mut cfg = TrainConfig::desk(method);
    cfg.eta = eta;
    cfg.epochs = epochs;
    cfg.hidden = hidden;
    cfg.batch_size = batch_size;
    cfg.base_lr = lr;
    cfg.attack = attack_config(epsilon, step_size, steps, true)?;
    cfg.seed = seed;
    cfg.fixed_weights = fixed_weights.map(ProbabilityDistribution::new).transpose().py()?;
    cfg.lr_milestones.retain(|&m| m < epochs);
    let data = dataset(x, labels, num_classes)?;
    let (model, history) = py.detach(|| train::train(&cfg, &data, None)).py()?;
    let records = history
        .records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("epoch", r.epoch)?;
            d.set_item("learning_rate", r.learning_rate)?;
            d.set_item("loss", r.loss)?;
            d.set_item("adversarial_loss", r.adversarial_loss)?;
            d.set_item("natural_loss", r.natural_loss)?;
            d.set_item("class_risks", r.class_risks.clone())?;
            d.set_item("class_weights", r.class_weights.clone())?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((Model { inner: model }, records))
}

#[pymodule]
fn codat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(chi_square_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(worst_case_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(equivalent_objective, m)?)?;
    m.add_function(wrap_pyfunction!(equivalent_objective_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_worst_case, m)?)?;
    m.add_function(wrap_pyfunction!(simplex_project, m)?)?;
    m.add_function(wrap_pyfunction!(fec, m)?)?;
    m.add_function(wrap_pyfunction!(class_variance, m)?)?;
    m.add_function(wrap_pyfunction!(toy3, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
