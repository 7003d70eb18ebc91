//! Adversarial training loops: class-level chi-square DRO (CODAT) and the
//! standard, fixed-weight and worst-class baselines.
//!
//! All four share one loop: attack the batch with PGD on the plain
//! cross-entropy, compute per-example adversarial losses, turn them into
//! per-class risks, and reduce the risks to a scalar with the method's
//! objective. The scalar is differentiated by weighting every example of
//! class `k` with `q_k / n_k`, where `q` is the objective's class weighting
//! (the worst-case distribution for CODAT) and `n_k` the class count in the
//! batch.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{pgd_attack, AttackConfig};
use crate::data::{batch_iter, stratified_batch_iter, Dataset};
use crate::dro::{worst_case_distribution, AmbiguityConfig, ClassRiskVector, ProbabilityDistribution};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::nn::{backward, cross_entropy_per_example, forward, lr_at_epoch, sgd_step, ModelParams, OptimizerState};
use crate::rng::{derive_seed, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Codat,
    StandardAt,
    Weighted,
    WorstClass,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Codat => "codat",
            Method::StandardAt => "standard_at",
            Method::Weighted => "weighted",
            Method::WorstClass => "worst_class",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "codat" => Ok(Method::Codat),
            "standard_at" | "at" => Ok(Method::StandardAt),
            "weighted" => Ok(Method::Weighted),
            "worst_class" => Ok(Method::WorstClass),
            _ => Err(Error::config(
                "method",
                format!("unknown method {s:?} (expected codat, standard_at, weighted, worst_class)"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batching {
    /// Plain shuffle per epoch.
    Shuffled,
    /// Class-interleaved shuffle; balanced batches on balanced data.
    Stratified,
}

impl fmt::Display for Batching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Batching::Shuffled => "shuffled",
            Batching::Stratified => "stratified",
        })
    }
}

impl FromStr for Batching {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shuffled" => Ok(Batching::Shuffled),
            "stratified" => Ok(Batching::Stratified),
            _ => Err(Error::config("batching", format!("unknown batching {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    /// Hidden layer widths of the classifier.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_milestones: Vec<usize>,
    pub lr_factor: f64,
    pub attack: AttackConfig,
    /// Chi-square radius (CODAT only).
    pub eta: f64,
    /// Class weights (weighted AT only).
    pub fixed_weights: Option<ProbabilityDistribution>,
    pub batching: Batching,
    /// Keep the epoch with the best worst-class robust accuracy on the
    /// evaluation data instead of the last one.
    pub select_best: bool,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults for `method`.
    pub fn desk(method: Method) -> Self {
        Self {
            method,
            hidden: vec![256, 256],
            epochs: 60,
            batch_size: 60,
            base_lr: 0.1,
            momentum: 0.9,
            weight_decay: 2e-4,
            lr_milestones: vec![45, 54],
            lr_factor: 0.1,
            attack: AttackConfig {
                epsilon: 0.03,
                step_size: 0.0075,
                steps: 10,
                random_start: true,
            },
            eta: 0.3,
            fixed_weights: None,
            batching: Batching::Stratified,
            select_best: false,
            seed: 0,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden", "layer widths must be positive"));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor.is_finite()) {
            return Err(Error::config("lr_factor", "must be positive"));
        }
        if self.lr_milestones.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("lr_milestones", "must be sorted ascending"));
        }
        self.attack.validate()?;
        if self.method == Method::Codat {
            AmbiguityConfig::uniform(num_classes, self.eta)?;
        }
        match (&self.fixed_weights, self.method) {
            (Some(w), Method::Weighted) if w.len() != num_classes => {
                return Err(Error::config(
                    "fixed_weights",
                    format!("{} weights for {num_classes} classes", w.len()),
                ))
            }
            (None, Method::Weighted) => return Err(Error::config("fixed_weights", "required for the weighted method")),
            (Some(_), m) if m != Method::Weighted => {
                return Err(Error::config("fixed_weights", "only valid for the weighted method"))
            }
            _ => {}
        }
        // Surfaces bad values early rather than at the first step.
        let probe = ModelParams::zeros(&[1, num_classes])?;
        OptimizerState::new(&probe, self.base_lr, self.momentum, self.weight_decay)?;
        Ok(())
    }

    /// SHA-256 over the settings every method shares: architecture, data,
    /// optimizer, schedule, attack, batching and seed. Method, radius and
    /// fixed weights are left out so that runs which reduce to one another
    /// (CODAT at radius 0 and standard AT) produce identical checkpoints.
    pub fn shared_hash(&self, model_dims: &[usize], data_tag: &str) -> Result<String> {
        let shared = serde_json::json!({
            "model_dims": model_dims,
            "data": data_tag,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "base_lr": self.base_lr,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "lr_milestones": self.lr_milestones,
            "lr_factor": self.lr_factor,
            "attack": self.attack,
            "batching": self.batching,
            "select_best": self.select_best,
            "seed": self.seed,
        });
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&shared)?)))
    }

    pub fn model_dims(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(num_classes))
            .collect()
    }
}

/// Per-class mean loss over the classes present in the batch. Absent classes
/// get risk 0 and `present = false`.
pub fn class_avg_loss(
    per_example_losses: &[f64],
    labels: &[usize],
    num_classes: usize,
) -> Result<(ClassRiskVector, Vec<bool>)> {
    if per_example_losses.is_empty() {
        return Err(Error::Empty("batch losses".into()));
    }
    if per_example_losses.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "losses vs labels",
            expected: labels.len(),
            actual: per_example_losses.len(),
        });
    }
    let mut sums = vec![0.0; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (&loss, &y) in per_example_losses.iter().zip(labels) {
        if y >= num_classes {
            return Err(Error::LabelOutOfRange { label: y, num_classes });
        }
        sums[y] += loss;
        counts[y] += 1;
    }
    let risks = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let present = counts.iter().map(|&c| c > 0).collect();
    Ok((ClassRiskVector::new(risks)?, present))
}

/// A batch objective reduced over classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassObjective {
    pub loss: f64,
    /// Length `K`; zero for absent classes; sums to 1 over present classes
    /// when any weight is nonzero.
    pub class_weights: Vec<f64>,
    /// `class_weights[k] / p0[k]` with `p0` uniform over the present classes.
    /// Exactly 1 wherever the weighting coincides with `p0`.
    pub likelihood_ratio: Vec<f64>,
    /// False when the CODAT closed form went negative and the oracle was used.
    pub closed_form_valid: bool,
}

fn present_indices(present: &[bool]) -> Result<Vec<usize>> {
    let idx: Vec<usize> = present
        .iter()
        .enumerate()
        .filter_map(|(k, &p)| p.then_some(k))
        .collect();
    if idx.is_empty() {
        return Err(Error::Empty("no class present in batch".into()));
    }
    Ok(idx)
}

fn expand(idx: &[usize], k: usize, sub: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for (&i, &v) in idx.iter().zip(sub) {
        out[i] = v;
    }
    out
}

/// CODAT batch objective: restrict to present classes, take `p0` uniform over
/// them, and solve the inner chi-square problem.
pub fn codat_objective(risks: &ClassRiskVector, present: &[bool], eta: f64) -> Result<ClassObjective> {
    let k = risks.len();
    if present.len() != k {
        return Err(Error::DimensionMismatch {
            context: "present mask",
            expected: k,
            actual: present.len(),
        });
    }
    let idx = present_indices(present)?;
    let sub: Vec<f64> = idx.iter().map(|&i| risks.risks()[i]).collect();
    if idx.len() == 1 {
        return Ok(ClassObjective {
            loss: sub[0],
            class_weights: expand(&idx, k, &[1.0]),
            likelihood_ratio: expand(&idx, k, &[1.0]),
            closed_form_valid: true,
        });
    }
    let p0 = ProbabilityDistribution::uniform(idx.len())?;
    let cfg = AmbiguityConfig::unbounded(p0, eta)?;
    let sol = worst_case_distribution(&ClassRiskVector::new(sub)?, &cfg)?;
    let ratio: Vec<f64> = sol
        .distribution
        .weights()
        .iter()
        .zip(cfg.p0().weights())
        .map(|(p, q)| p / q)
        .collect();
    Ok(ClassObjective {
        loss: sol.objective_value,
        class_weights: expand(&idx, k, sol.distribution.weights()),
        likelihood_ratio: expand(&idx, k, &ratio),
        closed_form_valid: sol.closed_form_valid,
    })
}

/// The scalar `l_equal` of a batch.
pub fn codat_batch_loss(risks: &ClassRiskVector, present: &[bool], eta: f64) -> Result<f64> {
    Ok(codat_objective(risks, present, eta)?.loss)
}

/// `sum_k w_k R_k` with `w` renormalized over present classes.
pub fn weighted_objective(
    risks: &ClassRiskVector,
    present: &[bool],
    weights: &ProbabilityDistribution,
) -> Result<ClassObjective> {
    let k = risks.len();
    if weights.len() != k || present.len() != k {
        return Err(Error::DimensionMismatch {
            context: "class weights",
            expected: k,
            actual: weights.len(),
        });
    }
    let idx = present_indices(present)?;
    let mass: f64 = idx.iter().map(|&i| weights.weights()[i]).sum();
    let uniform = 1.0 / idx.len() as f64;
    let q: Vec<f64> = idx
        .iter()
        .map(|&i| if mass > 0.0 { weights.weights()[i] / mass } else { 0.0 })
        .collect();
    let loss = idx.iter().zip(&q).map(|(&i, w)| w * risks.risks()[i]).sum();
    let ratio: Vec<f64> = q.iter().map(|w| w / uniform).collect();
    Ok(ClassObjective {
        loss,
        class_weights: expand(&idx, k, &q),
        likelihood_ratio: expand(&idx, k, &ratio),
        closed_form_valid: true,
    })
}

/// Maximum present-class risk; ties go to the lowest class index.
pub fn worst_class_objective(risks: &ClassRiskVector, present: &[bool]) -> Result<ClassObjective> {
    let k = risks.len();
    let idx = present_indices(present)?;
    let mut best = idx[0];
    for &i in &idx[1..] {
        if risks.risks()[i] > risks.risks()[best] {
            best = i;
        }
    }
    let mut weights = vec![0.0; k];
    weights[best] = 1.0;
    let ratio = weights.iter().map(|w| w * idx.len() as f64).collect();
    Ok(ClassObjective {
        loss: risks.risks()[best],
        class_weights: weights,
        likelihood_ratio: ratio,
        closed_form_valid: true,
    })
}

/// Per-example weights `q_k / n_k`, computed as `L_k / (K' n_k)` with
/// `L_k = q_k / p0_k`.
pub fn example_weights(objective: &ClassObjective, labels: &[usize]) -> Vec<f64> {
    let k = objective.class_weights.len();
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&y| counts[y] += 1);
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    labels
        .iter()
        .map(|&y| objective.likelihood_ratio[y] / (present * counts[y] as f64))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean batch objective (`l_equal` for CODAT).
    pub loss: f64,
    /// Mean unweighted adversarial cross-entropy.
    pub adversarial_loss: f64,
    /// Mean clean cross-entropy on the same pre-step snapshots.
    pub natural_loss: f64,
    /// Mean per-class adversarial risk over the batches containing the class.
    pub class_risks: Vec<f64>,
    /// Mean class weighting over batches (the worst-case distribution for
    /// CODAT). A distribution over the `K` classes.
    pub class_weights: Vec<f64>,
    /// Batches whose highest-risk class also received the highest weight.
    pub attention_agreement: f64,
    /// Largest `|sum_k q_k R_k - loss|` over the epoch's batches.
    pub weight_objective_gap: f64,
    pub closed_form_fallbacks: usize,
    pub batches: usize,
    pub eval_worst_accuracy: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub config: TrainConfig,
    pub model_dims: Vec<usize>,
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum HistoryLine {
    Header {
        config: TrainConfig,
        model_dims: Vec<usize>,
    },
    Epoch(EpochRecord),
    Footer {
        best_epoch: Option<usize>,
    },
}

impl TrainHistory {
    /// One JSON object per line: a header with the full configuration, one
    /// record per epoch, and a footer.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut lines = Vec::with_capacity(self.records.len() + 2);
        lines.push(serde_json::to_string(&HistoryLine::Header {
            config: self.config.clone(),
            model_dims: self.model_dims.clone(),
        })?);
        for r in &self.records {
            lines.push(serde_json::to_string(&HistoryLine::Epoch(r.clone()))?);
        }
        lines.push(serde_json::to_string(&HistoryLine::Footer {
            best_epoch: self.best_epoch,
        })?);
        std::fs::write(path, lines.join("\n") + "\n")?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut header = None;
        let mut records = Vec::new();
        let mut best_epoch = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str(line)? {
                HistoryLine::Header { config, model_dims } => header = Some((config, model_dims)),
                HistoryLine::Epoch(r) => records.push(r),
                HistoryLine::Footer { best_epoch: b } => best_epoch = b,
            }
            if i == 0 && header.is_none() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    reason: "history must start with a header line".into(),
                });
            }
        }
        let (config, model_dims) = header.ok_or_else(|| Error::Empty("history header".into()))?;
        Ok(Self {
            config,
            model_dims,
            records,
            best_epoch,
        })
    }
}

fn argmax_present(values: &[f64], present: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, (&v, &p)) in values.iter().zip(present).enumerate() {
        if p && best.is_none_or(|b| v > values[b]) {
            best = Some(k);
        }
    }
    best
}

fn objective_for(
    config: &TrainConfig,
    risks: &ClassRiskVector,
    present: &[bool],
    losses: &[f64],
) -> Result<ClassObjective> {
    match config.method {
        Method::Codat => codat_objective(risks, present, config.eta),
        Method::Weighted => weighted_objective(
            risks,
            present,
            config
                .fixed_weights
                .as_ref()
                .ok_or_else(|| Error::config("fixed_weights", "required for the weighted method"))?,
        ),
        Method::WorstClass => worst_class_objective(risks, present),
        Method::StandardAt => {
            // Class weighting n_k / m reproduces the per-example mean.
            let m = losses.len() as f64;
            let k = risks.len();
            let idx = present_indices(present)?;
            let mut objective = weighted_objective(risks, present, &ProbabilityDistribution::uniform(k)?)?;
            objective.loss = losses.iter().sum::<f64>() / m;
            objective.closed_form_valid = true;
            objective.class_weights = vec![0.0; k];
            objective.likelihood_ratio = vec![0.0; k];
            // Filled in by the caller from class counts.
            let _ = idx;
            Ok(objective)
        }
    }
}

/// Run the training loop for `config.method`.
pub fn train(config: &TrainConfig, data: &Dataset, eval: Option<&Dataset>) -> Result<(ModelParams, TrainHistory)> {
    let k = data.num_classes();
    config.validate(k)?;
    if config.select_best && eval.is_none() {
        return Err(Error::config("select_best", "requires evaluation data"));
    }
    let dims = config.model_dims(data.dim(), k);
    let mut model = ModelParams::init(&dims, config.seed)?;
    let mut opt = OptimizerState::new(&model, config.base_lr, config.momentum, config.weight_decay)?;
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        opt.learning_rate = lr_at_epoch(config.base_lr, epoch, &config.lr_milestones, config.lr_factor);
        let batches = match config.batching {
            Batching::Shuffled => batch_iter(data, config.batch_size, config.seed, epoch, true)?,
            Batching::Stratified => stratified_batch_iter(data, config.batch_size, config.seed, epoch)?,
        };

        let mut loss_sum = 0.0;
        let mut adv_sum = 0.0;
        let mut nat_sum = 0.0;
        let mut risk_sum = vec![0.0; k];
        let mut risk_batches = vec![0usize; k];
        let mut weight_sum = vec![0.0; k];
        let mut agree = 0usize;
        let mut gap = 0.0f64;
        let mut fallbacks = 0usize;

        for (b, batch) in batches.iter().enumerate() {
            let seed = derive_seed(config.seed, &[stream::ATTACK, epoch as u64, b as u64]);
            let natural = cross_entropy_per_example(&forward(&model, batch)?, batch.labels())?;
            let mean_natural = natural.iter().sum::<f64>() / natural.len() as f64;
            // Overflowing weights show up first as a non-finite loss or
            // input gradient.
            let diverged = Error::Diverged {
                epoch,
                batch: b,
                loss: mean_natural,
            };
            if !mean_natural.is_finite() {
                return Err(diverged);
            }
            let adv = match pgd_attack(&model, batch, &config.attack, seed) {
                Ok(x) => batch.with_features(x)?,
                Err(Error::NonFinite(_)) => return Err(diverged),
                Err(e) => return Err(e),
            };
            let losses = cross_entropy_per_example(&forward(&model, &adv)?, adv.labels())?;
            let mean_adv = losses.iter().sum::<f64>() / losses.len() as f64;
            if let Some(bad) = losses.iter().find(|l| !l.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: *bad,
                });
            }

            let (risks, present) = class_avg_loss(&losses, adv.labels(), k)?;
            let mut objective = objective_for(config, &risks, &present, &losses)?;
            let weights = if config.method == Method::StandardAt {
                let m = losses.len() as f64;
                let mut counts = vec![0usize; k];
                adv.labels().iter().for_each(|&y| counts[y] += 1);
                objective.class_weights = counts.iter().map(|&c| c as f64 / m).collect();
                vec![1.0 / m; losses.len()]
            } else {
                example_weights(&objective, adv.labels())
            };
            if !objective.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: objective.loss,
                });
            }

            let (grads, _) = backward(&model, &adv, &weights)?;
            sgd_step(&mut model, &grads, &mut opt)?;

            loss_sum += objective.loss;
            adv_sum += mean_adv;
            nat_sum += mean_natural;
            for c in 0..k {
                if present[c] {
                    risk_sum[c] += risks.risks()[c];
                    risk_batches[c] += 1;
                }
                weight_sum[c] += objective.class_weights[c];
            }
            if argmax_present(risks.risks(), &present) == argmax_present(&objective.class_weights, &present) {
                agree += 1;
            }
            if objective.closed_form_valid {
                let dot: f64 = objective
                    .class_weights
                    .iter()
                    .zip(risks.risks())
                    .map(|(w, r)| w * r)
                    .sum();
                if config.method != Method::StandardAt {
                    gap = gap.max((dot - objective.loss).abs());
                }
            } else {
                fallbacks += 1;
            }
        }

        let n = batches.len() as f64;
        let eval_worst = match (config.select_best, eval) {
            (true, Some(ev)) => {
                let report = evaluate(&model, ev, Some(&config.attack), config.seed)?;
                let w = report.worst_class_accuracy;
                if best.as_ref().is_none_or(|(bw, _, _)| w > *bw) {
                    best = Some((w, epoch, model.clone()));
                }
                Some(w)
            }
            _ => None,
        };
        records.push(EpochRecord {
            epoch,
            learning_rate: opt.learning_rate,
            loss: loss_sum / n,
            adversarial_loss: adv_sum / n,
            natural_loss: nat_sum / n,
            class_risks: risk_sum
                .iter()
                .zip(&risk_batches)
                .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
                .collect(),
            class_weights: weight_sum.iter().map(|w| w / n).collect(),
            attention_agreement: agree as f64 / n,
            weight_objective_gap: gap,
            closed_form_fallbacks: fallbacks,
            batches: batches.len(),
            eval_worst_accuracy: eval_worst,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }

    let best_epoch = best.as_ref().map(|(_, e, _)| *e);
    if let Some((_, _, m)) = best {
        model = m;
    }
    Ok((
        model,
        TrainHistory {
            config: config.clone(),
            model_dims: dims,
            records,
            best_epoch,
        },
    ))
}

fn require_method(config: &TrainConfig, method: Method) -> Result<()> {
    if config.method != method {
        return Err(Error::config(
            "method",
            format!("expected {method}, config says {}", config.method),
        ));
    }
    Ok(())
}

/// Class-level chi-square DRO adversarial training.
pub fn train_codat(
    config: &TrainConfig,
    data: &Dataset,
    eval: Option<&Dataset>,
) -> Result<(ModelParams, TrainHistory)> {
    require_method(config, Method::Codat)?;
    train(config, data, eval)
}

/// Mean adversarial loss over examples.
pub fn train_standard_at(
    config: &TrainConfig,
    data: &Dataset,
    eval: Option<&Dataset>,
) -> Result<(ModelParams, TrainHistory)> {
    require_method(config, Method::StandardAt)?;
    train(config, data, eval)
}

/// Fixed class weights.
pub fn train_weighted(
    config: &TrainConfig,
    data: &Dataset,
    eval: Option<&Dataset>,
) -> Result<(ModelParams, TrainHistory)> {
    require_method(config, Method::Weighted)?;
    train(config, data, eval)
}

/// Minimize the largest class risk.
pub fn train_worst_class(
    config: &TrainConfig,
    data: &Dataset,
    eval: Option<&Dataset>,
) -> Result<(ModelParams, TrainHistory)> {
    require_method(config, Method::WorstClass)?;
    train(config, data, eval)
}
