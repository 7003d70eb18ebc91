//! Per-class accuracy reports and the Fairness Elasticity Coefficient.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::attack::{pgd_attack, AttackConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{logits, ModelParams};
use crate::rng::{derive_seed, stream};

const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub per_class_accuracy: Vec<f64>,
    pub class_counts: Vec<usize>,
    pub average_accuracy: f64,
    pub worst_class_accuracy: f64,
    pub class_variance: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub attack: String,
    pub seed: u64,
    /// Resolved run configuration, filled in by callers that have one.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, String>,
}

impl EvalReport {
    pub const SCHEMA_VERSION: u32 = 1;

    /// Build a report from a confusion matrix (rows are true classes).
    pub fn from_confusion(confusion: Vec<Vec<usize>>, attack: String, seed: u64) -> Result<Self> {
        let class_counts: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
        if let Some(class) = class_counts.iter().position(|&c| c == 0) {
            return Err(Error::MissingClass { class });
        }
        let per_class_accuracy: Vec<f64> = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| row[k] as f64 / class_counts[k] as f64)
            .collect();
        let correct: usize = (0..confusion.len()).map(|k| confusion[k][k]).sum();
        let total: usize = class_counts.iter().sum();
        Ok(Self {
            schema_version: Self::SCHEMA_VERSION,
            average_accuracy: correct as f64 / total as f64,
            worst_class_accuracy: per_class_accuracy.iter().copied().fold(f64::INFINITY, f64::min),
            class_variance: class_variance(&per_class_accuracy),
            per_class_accuracy,
            class_counts,
            confusion,
            attack,
            seed,
            config: BTreeMap::new(),
        })
    }

    pub fn summary(&self, method: impl Into<String>) -> MethodSummary {
        MethodSummary {
            method: method.into(),
            avg: self.average_accuracy,
            wst: self.worst_class_accuracy,
        }
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// K x K counts, no header.
    pub fn write_confusion_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        for row in &self.confusion {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Natural or adversarial accuracy report. Every class must occur in `data`.
pub fn evaluate(model: &ModelParams, data: &Dataset, attack: Option<&AttackConfig>, seed: u64) -> Result<EvalReport> {
    if data.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "evaluation features vs model input",
            expected: model.input_dim(),
            actual: data.dim(),
        });
    }
    if data.num_classes() != model.num_classes() {
        return Err(Error::DimensionMismatch {
            context: "evaluation classes vs model outputs",
            expected: model.num_classes(),
            actual: data.num_classes(),
        });
    }
    if let Some(class) = data.class_counts().iter().position(|&c| c == 0) {
        return Err(Error::MissingClass { class });
    }
    let k = data.num_classes();
    let adversarial = attack
        .map(|cfg| adversarial_features(model, data, cfg, seed))
        .transpose()?;
    let features = adversarial.as_ref().unwrap_or(data.features());
    let mut confusion = vec![vec![0usize; k]; k];
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let out = logits(model, features.slice(s![start..end, ..]))?;
        for (row, &y) in out.outer_iter().zip(&data.labels()[start..end]) {
            confusion[y][argmax(row)] += 1;
        }
    }
    let tag = attack.map_or_else(|| "none".to_string(), AttackConfig::tag);
    EvalReport::from_confusion(confusion, tag, seed)
}

/// PGD perturbation of every example in `data`, attacked in fixed chunks of
/// 256 with per-chunk seeds derived from `seed`.
pub fn adversarial_features(
    model: &ModelParams,
    data: &Dataset,
    attack: &AttackConfig,
    seed: u64,
) -> Result<Array2<f64>> {
    let mut out = data.features().clone();
    for (chunk, start) in (0..data.len()).step_by(EVAL_CHUNK).enumerate() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let indices: Vec<usize> = (start..end).collect();
        let batch = data.batch(&indices)?;
        let adv = pgd_attack(model, &batch, attack, derive_seed(seed, &[stream::EVAL, chunk as u64]))?;
        out.slice_mut(s![start..end, ..]).assign(&adv);
    }
    Ok(out)
}

/// Predicted classes (argmax, ties to the lowest index).
pub fn predict(model: &ModelParams, features: &Array2<f64>) -> Result<Vec<usize>> {
    Ok(logits(model, features.view())?.outer_iter().map(argmax).collect())
}

/// Population variance of the per-class accuracies.
pub fn class_variance(per_class_accuracy: &[f64]) -> f64 {
    if per_class_accuracy.is_empty() {
        return 0.0;
    }
    let n = per_class_accuracy.len() as f64;
    let mean = per_class_accuracy.iter().sum::<f64>() / n;
    per_class_accuracy.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n
}

/// Worst-class and average accuracy of a method and its baseline, all on the
/// same scale (all percentages or all fractions).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FecInputs {
    pub a_wc: f64,
    pub a_wc_baseline: f64,
    pub a_avg: f64,
    pub a_avg_baseline: f64,
}

impl FecInputs {
    pub fn new(a_wc: f64, a_wc_baseline: f64, a_avg: f64, a_avg_baseline: f64) -> Result<Self> {
        for (name, v) in [("a_wc", a_wc), ("a_avg", a_avg)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(name, format!("{v} must be finite and >= 0")));
            }
        }
        for (name, v) in [("a_wc_baseline", a_wc_baseline), ("a_avg_baseline", a_avg_baseline)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("baseline accuracy {v} must be > 0")));
            }
        }
        Ok(Self {
            a_wc,
            a_wc_baseline,
            a_avg,
            a_avg_baseline,
        })
    }
}

/// `exp(dA_wc) / exp(dA_avg)` where `dA_wc` is the relative worst-class gain
/// and `dA_avg` the relative average-accuracy loss against the baseline.
pub fn fec(inputs: &FecInputs) -> f64 {
    let worst_gain = (inputs.a_wc - inputs.a_wc_baseline) / inputs.a_wc_baseline;
    let average_drop = (inputs.a_avg_baseline - inputs.a_avg) / inputs.a_avg_baseline;
    (worst_gain - average_drop).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub avg: f64,
    pub wst: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FecRow {
    pub method: String,
    pub avg: f64,
    pub wst: f64,
    pub fec: f64,
}

pub fn fec_table(methods: &[MethodSummary], baseline: &str) -> Result<Vec<FecRow>> {
    let base = methods
        .iter()
        .find(|m| m.method == baseline)
        .ok_or_else(|| Error::MissingBaseline(baseline.to_string()))?;
    methods
        .iter()
        .map(|m| {
            let value = if m.method == baseline {
                1.0
            } else {
                fec(&FecInputs::new(m.wst, base.wst, m.avg, base.avg)?)
            };
            Ok(FecRow {
                method: m.method.clone(),
                avg: m.avg,
                wst: m.wst,
                fec: value,
            })
        })
        .collect()
}

pub fn fec_table_from_reports(reports: &[(String, EvalReport)], baseline: &str) -> Result<Vec<FecRow>> {
    let summaries: Vec<MethodSummary> = reports.iter().map(|(name, r)| r.summary(name.clone())).collect();
    fec_table(&summaries, baseline)
}

/// CSV with header `method,avg,wst,fec`; FEC rounded to two decimals.
pub fn write_fec_csv<W: Write>(rows: &[FecRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "avg", "wst", "fec"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.avg.to_string(),
            r.wst.to_string(),
            format!("{:.2}", r.fec),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fec_published_values() {
        let codat = FecInputs::new(37.30, 22.00, 50.56, 49.57).unwrap();
        assert_abs_diff_eq!(fec(&codat), 2.05, epsilon = 0.01);
        let wat = FecInputs::new(36.30, 22.00, 49.69, 49.57).unwrap();
        assert_abs_diff_eq!(fec(&wat), 1.92, epsilon = 0.01);
        let stl = FecInputs::new(13.25, 5.75, 29.54, 33.88).unwrap();
        assert_abs_diff_eq!(fec(&stl), 3.24, epsilon = 0.01);
        let same = FecInputs::new(30.0, 30.0, 50.0, 50.0).unwrap();
        assert_eq!(fec(&same), 1.0);
        assert!(FecInputs::new(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(FecInputs::new(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn fec_scale_invariance() {
        let pct = fec(&FecInputs::new(37.30, 22.00, 50.56, 49.57).unwrap());
        let frac = fec(&FecInputs::new(0.3730, 0.2200, 0.5056, 0.4957).unwrap());
        assert_abs_diff_eq!(pct, frac, epsilon = 1e-12);
    }

    #[test]
    fn variance_examples() {
        assert_abs_diff_eq!(class_variance(&[0.4, 0.4, 0.4]), 0.0, epsilon = 1e-30);
        assert_abs_diff_eq!(class_variance(&[0.0, 1.0]), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(class_variance(&[0.2, 0.4, 0.9]), 0.26 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn table_baseline_only() {
        let rows = fec_table(
            &[MethodSummary {
                method: "AT".into(),
                avg: 49.57,
                wst: 22.0,
            }],
            "AT",
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].fec, 1.0);
        let mut out = Vec::new();
        write_fec_csv(&rows, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "method,avg,wst,fec\nAT,49.57,22,1.00\n"
        );
        assert!(matches!(fec_table(&[], "AT"), Err(Error::MissingBaseline(_))));
    }

    #[test]
    fn report_from_constant_predictor() {
        let r = EvalReport::from_confusion(vec![vec![5, 0], vec![5, 0]], "none".into(), 0).unwrap();
        assert_eq!(r.per_class_accuracy, vec![1.0, 0.0]);
        assert_eq!(r.average_accuracy, 0.5);
        assert_eq!(r.worst_class_accuracy, 0.0);
        assert_eq!(r.class_variance, 0.25);
        assert!(EvalReport::from_confusion(vec![vec![1, 0], vec![0, 0]], "none".into(), 0).is_err());
    }
}
