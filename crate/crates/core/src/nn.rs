//! Dense rectifier network with softmax cross-entropy, reverse-mode gradients
//! for parameters and inputs, and SGD with momentum and weight decay.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

/// Classifier parameters. Rectifier between layers, identity at the output.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    layers: Vec<DenseLayer>,
}

impl ModelParams {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("model has no layers".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::DimensionMismatch {
                    context: "layer bias",
                    expected: layer.outputs(),
                    actual: layer.bias.len(),
                });
            }
            if i > 0 && layer.inputs() != layers[i - 1].outputs() {
                return Err(Error::DimensionMismatch {
                    context: "layer chaining",
                    expected: layers[i - 1].outputs(),
                    actual: layer.inputs(),
                });
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        if layers.last().map(DenseLayer::outputs).unwrap_or(0) < 2 {
            return Err(Error::config("dims", "need at least 2 output classes"));
        }
        Ok(Self { layers })
    }

    /// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for weights and biases. `dims = [input, hidden..., classes]`.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = rng_for(seed, &[stream::INIT]);
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((w[1], w[0]), || rng.random_range(-bound..bound));
                let bias = Array1::from_shape_simple_fn(w[1], || rng.random_range(-bound..bound));
                DenseLayer { weight, bias }
            })
            .collect();
        Self::new(layers)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Self::new(dims.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect())
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// `[input, hidden..., classes]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(DenseLayer::outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Layer by layer: weight (row-major), then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn from_flat(dims: &[usize], values: &[f64]) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        if values.len() != model.num_params() {
            return Err(Error::DimensionMismatch {
                context: "flattened parameters",
                expected: model.num_params(),
                actual: values.len(),
            });
        }
        let mut it = values.iter().copied();
        for l in &mut model.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Self::new(model.layers)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::config("dims", "need at least input and output sizes"));
    }
    if dims.contains(&0) {
        return Err(Error::config("dims", "layer sizes must be positive"));
    }
    Ok(())
}

/// A minibatch with features in `[0, 1]` and 0-based labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledBatch {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "batch rows",
                expected: labels.len(),
                actual: features.nrows(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        if features.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("batch features must lie in [0, 1]".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    /// Same labels, new features (for example adversarial counterparts).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.dim() != self.features.dim() {
            return Err(Error::DimensionMismatch {
                context: "replacement features",
                expected: self.features.len(),
                actual: features.len(),
            });
        }
        Self::new(features, self.labels.clone(), self.num_classes)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Per-layer activations: input, each hidden rectifier output, then logits.
struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

fn forward_cached(model: &ModelParams, features: ArrayView2<'_, f64>) -> Result<ForwardCache> {
    if features.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "forward input features",
            expected: model.input_dim(),
            actual: features.ncols(),
        });
    }
    let last = model.layers.len() - 1;
    let mut activations = Vec::with_capacity(model.layers.len() + 1);
    activations.push(features.to_owned());
    for (i, layer) in model.layers.iter().enumerate() {
        let mut z = activations[i].dot(&layer.weight.t());
        z += &layer.bias;
        if i < last {
            z.mapv_inplace(|v| v.max(0.0));
        }
        activations.push(z);
    }
    Ok(ForwardCache { activations })
}

/// Logits for a raw feature matrix (`m x d`).
pub fn logits(model: &ModelParams, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(forward_cached(model, features)?.activations.pop().unwrap())
}

/// Logits (`m x K`) for a batch.
pub fn forward(model: &ModelParams, batch: &LabeledBatch) -> Result<Array2<f64>> {
    logits(model, batch.features().view())
}

/// `logsumexp(logits) - logit_true` per row, with a max shift.
pub fn cross_entropy_per_example(logits: &Array2<f64>, labels: &[usize]) -> Result<Vec<f64>> {
    if logits.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "cross entropy rows",
            expected: labels.len(),
            actual: logits.nrows(),
        });
    }
    let k = logits.ncols();
    logits
        .outer_iter()
        .zip(labels)
        .map(|(row, &y)| {
            if y >= k {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    num_classes: k,
                });
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            Ok((lse - row[y]).max(0.0))
        })
        .collect()
}

/// Gradient of `sum_i w_i * CE_i` with respect to the logits.
fn weighted_softmax_residual(logits: &Array2<f64>, labels: &[usize], weights: &[f64]) -> Array2<f64> {
    let mut d = logits.clone();
    for ((mut row, &y), &w) in d.outer_iter_mut().zip(labels).zip(weights) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| w * v / sum);
        row[y] -= w;
    }
    d
}

/// Parameter gradients, shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

fn backprop(
    model: &ModelParams,
    cache: &ForwardCache,
    dlogits: Array2<f64>,
    want_params: bool,
) -> (Option<Gradients>, Array2<f64>) {
    let mut grads = Vec::with_capacity(if want_params { model.layers.len() } else { 0 });
    let mut delta = dlogits;
    for (i, layer) in model.layers.iter().enumerate().rev() {
        let input = &cache.activations[i];
        if want_params {
            grads.push(DenseLayer {
                weight: delta.t().dot(input),
                bias: delta.sum_axis(Axis(0)),
            });
        }
        let mut upstream = delta.dot(&layer.weight);
        if i > 0 {
            Zip::from(&mut upstream).and(input).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
        }
        delta = upstream;
    }
    let grads = want_params.then(|| {
        grads.reverse();
        Gradients { layers: grads }
    });
    (grads, delta)
}

fn check_weights(batch: &LabeledBatch, weights: &[f64]) -> Result<()> {
    if weights.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            context: "per-example loss weights",
            expected: batch.len(),
            actual: weights.len(),
        });
    }
    Ok(())
}

/// Gradients of `sum_i weights[i] * CE_i` with respect to every parameter and
/// every input feature (`m x d`).
pub fn backward(model: &ModelParams, batch: &LabeledBatch, weights: &[f64]) -> Result<(Gradients, Array2<f64>)> {
    check_weights(batch, weights)?;
    let cache = forward_cached(model, batch.features().view())?;
    if batch.num_classes() != model.num_classes() {
        return Err(Error::DimensionMismatch {
            context: "batch classes vs model outputs",
            expected: model.num_classes(),
            actual: batch.num_classes(),
        });
    }
    let dlogits = weighted_softmax_residual(cache.activations.last().unwrap(), batch.labels(), weights);
    let (grads, input) = backprop(model, &cache, dlogits, true);
    Ok((grads.unwrap(), input))
}

/// Per-example cross-entropy and the gradient of their sum with respect to
/// the inputs. Skips parameter gradients.
pub fn loss_and_input_gradient(
    model: &ModelParams,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<(Vec<f64>, Array2<f64>)> {
    let cache = forward_cached(model, features)?;
    let logits = cache.activations.last().unwrap();
    let losses = cross_entropy_per_example(logits, labels)?;
    let ones = vec![1.0; labels.len()];
    let dlogits = weighted_softmax_residual(logits, labels, &ones);
    let (_, input) = backprop(model, &cache, dlogits, false);
    Ok((losses, input))
}

/// SGD state: one momentum buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    buffers: Vec<DenseLayer>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    pub fn new(model: &ModelParams, learning_rate: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config("base_lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be >= 0"));
        }
        Ok(Self {
            buffers: model
                .layers()
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs(), l.outputs()))
                .collect(),
            learning_rate,
            momentum,
            weight_decay,
        })
    }

    pub fn buffers(&self) -> &[DenseLayer] {
        &self.buffers
    }
}

/// `buf <- momentum * buf + grad + wd * param; param <- param - lr * buf`.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    let n = params.layers.len();
    if grads.layers.len() != n || state.buffers.len() != n {
        return Err(Error::DimensionMismatch {
            context: "sgd layer count",
            expected: n,
            actual: grads.layers.len().min(state.buffers.len()),
        });
    }
    for ((p, g), b) in params.layers.iter().zip(&grads.layers).zip(&state.buffers) {
        if p.weight.dim() != g.weight.dim()
            || p.bias.dim() != g.bias.dim()
            || p.weight.dim() != b.weight.dim()
            || p.bias.dim() != b.bias.dim()
        {
            return Err(Error::DimensionMismatch {
                context: "sgd tensor shape",
                expected: p.weight.len() + p.bias.len(),
                actual: g.weight.len() + g.bias.len(),
            });
        }
    }
    let (lr, mu, wd) = (state.learning_rate, state.momentum, state.weight_decay);
    for ((p, g), b) in params
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.buffers)
    {
        Zip::from(&mut p.weight)
            .and(&g.weight)
            .and(&mut b.weight)
            .for_each(|p, &g, b| {
                *b = mu * *b + g + wd * *p;
                *p -= lr * *b;
            });
        Zip::from(&mut p.bias)
            .and(&g.bias)
            .and(&mut b.bias)
            .for_each(|p, &g, b| {
                *b = mu * *b + g + wd * *p;
                *p -= lr * *b;
            });
    }
    Ok(())
}

/// Piecewise-constant schedule: `base * factor^(#milestones <= epoch)`.
pub fn lr_at_epoch(base_lr: f64, epoch: usize, milestones: &[usize], factor: f64) -> f64 {
    let passed = milestones.iter().filter(|&&m| m <= epoch).count();
    base_lr * factor.powi(passed as i32)
}

/// Serialized model container (JSON). See the README for the schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub layer_dims: Vec<usize>,
    pub parameters: Vec<f64>,
    pub seed: u64,
    pub config_hash: String,
}

impl Checkpoint {
    pub const FORMAT: &'static str = "codat-checkpoint";
    pub const VERSION: u32 = 1;

    pub fn from_model(model: &ModelParams, seed: u64, config_hash: impl Into<String>) -> Self {
        Self {
            format: Self::FORMAT.into(),
            version: Self::VERSION,
            layer_dims: model.dims(),
            parameters: model.flatten(),
            seed,
            config_hash: config_hash.into(),
        }
    }

    pub fn to_model(&self) -> Result<ModelParams> {
        if self.format != Self::FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != Self::VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {})",
                self.version,
                Self::VERSION
            )));
        }
        ModelParams::from_flat(&self.layer_dims, &self.parameters)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
