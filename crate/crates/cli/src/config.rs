//! Flat `key = value` run configuration.
//!
//! Resolution order: preset defaults, then the config file, then command-line
//! flags. [`RunConfig::to_text`] prints every key, and the printed text parses
//! back to the same configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use codat_core::data::{gen_mixture_split, load_csv, load_idx, CsvSpec, Dataset, MixtureSpec};
use codat_core::train::{Batching, Method, TrainConfig};
use codat_core::{AmbiguityConfig, AttackConfig, ProbabilityDistribution};

pub const OUT_DIR_ENV: &str = "CODAT_OUT_DIR";
pub const PRESETS: [&str; 2] = ["toy3", "paper-cifar"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    Mixture,
    Idx,
    Csv,
}

impl DataKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DataKind::Mixture => "mixture",
            DataKind::Idx => "idx",
            DataKind::Csv => "csv",
        }
    }
}

impl FromStr for DataKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixture" => Ok(DataKind::Mixture),
            "idx" => Ok(DataKind::Idx),
            "csv" => Ok(DataKind::Csv),
            other => bail!("unknown data source {other:?} (expected mixture, idx or csv)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub train: TrainConfig,
    pub eval_attack: AttackConfig,
    pub data: DataKind,
    /// Seed for the synthetic data; `None` reuses the run seed.
    pub data_seed: Option<u64>,
    pub num_classes: usize,
    pub mixture_means: Vec<Vec<f64>>,
    pub mixture_spread: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    pub train_csv: String,
    pub test_csv: String,
    pub csv_label_column: usize,
    pub csv_header: bool,
    pub csv_normalize: bool,
    pub out_dir: PathBuf,
}

/// Every key, in printing order.
pub const KEYS: &[&str] = &[
    "preset",
    "method",
    "eta",
    "fixed_weights",
    "seed",
    "hidden",
    "epochs",
    "batch_size",
    "lr",
    "momentum",
    "weight_decay",
    "lr_milestones",
    "lr_factor",
    "batching",
    "select_best",
    "train_epsilon",
    "train_step_size",
    "train_steps",
    "train_random_start",
    "eval_epsilon",
    "eval_step_size",
    "eval_steps",
    "eval_random_start",
    "data",
    "data_seed",
    "num_classes",
    "mixture_means",
    "mixture_spread",
    "train_per_class",
    "test_per_class",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
    "train_csv",
    "test_csv",
    "csv_label_column",
    "csv_header",
    "csv_normalize",
    "out_dir",
];

/// Keys that describe the data; they feed the checkpoint's config hash.
const DATA_KEYS: &[&str] = &[
    "data",
    "num_classes",
    "mixture_means",
    "mixture_spread",
    "train_per_class",
    "test_per_class",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
    "train_csv",
    "test_csv",
    "csv_label_column",
    "csv_header",
    "csv_normalize",
];

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| anyhow!("{key}: bad list entry {v:?}: {e}"))
        })
        .collect()
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| anyhow!("{key}: cannot parse {value:?}: {e}"))
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy3" => Ok(Self::toy3()),
            "paper-cifar" => Ok(Self::paper_cifar()),
            other => bail!(
                "preset: unknown preset {other:?} (expected one of {})",
                PRESETS.join(", ")
            ),
        }
    }

    /// Desk-scale default: three Gaussian classes, MLP 2x256, 60 epochs.
    pub fn toy3() -> Self {
        let mixture = MixtureSpec::toy3(500, 0);
        Self {
            preset: "toy3".into(),
            train: TrainConfig::desk(Method::Codat),
            eval_attack: AttackConfig {
                epsilon: 0.03,
                step_size: 0.0075,
                steps: 20,
                random_start: true,
            },
            data: DataKind::Mixture,
            data_seed: None,
            num_classes: mixture.num_classes,
            mixture_means: mixture.means,
            mixture_spread: mixture.spread,
            train_per_class: 500,
            test_per_class: 200,
            train_images: String::new(),
            train_labels: String::new(),
            test_images: String::new(),
            test_labels: String::new(),
            train_csv: String::new(),
            test_csv: String::new(),
            csv_label_column: 0,
            csv_header: true,
            csv_normalize: false,
            out_dir: default_out_dir(),
        }
    }

    /// The published CIFAR schedule on IDX files. Image paths must be supplied.
    pub fn paper_cifar() -> Self {
        let mut cfg = Self::toy3();
        cfg.preset = "paper-cifar".into();
        cfg.train.epochs = 100;
        cfg.train.batch_size = 128;
        cfg.train.lr_milestones = vec![75, 90];
        cfg.train.batching = Batching::Shuffled;
        cfg.train.attack = AttackConfig::image_train();
        cfg.eval_attack = AttackConfig::image_eval();
        cfg.data = DataKind::Idx;
        cfg.num_classes = 10;
        cfg
    }

    /// Load a config file, applying its keys over the preset it names (or
    /// over `preset` when given, which wins over the file's own key).
    pub fn resolve(preset: Option<&str>, file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let pairs = match file {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                parse_pairs(&text).with_context(|| format!("in config {}", path.display()))?
            }
            None => Vec::new(),
        };
        let from_file = pairs.iter().rev().find(|(k, _)| k == "preset").map(|(_, v)| v.as_str());
        let from_flags = overrides
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.as_str());
        let name = from_flags.or(preset).or(from_file).unwrap_or("toy3");
        let mut cfg = Self::preset(name)?;
        for (k, v) in pairs.iter().chain(overrides) {
            if k != "preset" {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let name = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map_or("toy3", |(_, v)| v.as_str());
        let mut cfg = Self::preset(name)?;
        for (k, v) in &pairs {
            if k != "preset" {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let t = &mut self.train;
        match key {
            "preset" => bail!("preset: can only be chosen before other keys are applied"),
            "method" => t.method = v.parse().map_err(|e| anyhow!("method: {e}"))?,
            "eta" => t.eta = parse_value(key, v)?,
            "fixed_weights" => {
                t.fixed_weights = if v.is_empty() {
                    None
                } else {
                    Some(ProbabilityDistribution::new(parse_list(key, v)?).map_err(|e| anyhow!("fixed_weights: {e}"))?)
                }
            }
            "seed" => t.seed = parse_value(key, v)?,
            "hidden" => t.hidden = parse_list(key, v)?,
            "epochs" => t.epochs = parse_value(key, v)?,
            "batch_size" => t.batch_size = parse_value(key, v)?,
            "lr" => t.base_lr = parse_value(key, v)?,
            "momentum" => t.momentum = parse_value(key, v)?,
            "weight_decay" => t.weight_decay = parse_value(key, v)?,
            "lr_milestones" => t.lr_milestones = parse_list(key, v)?,
            "lr_factor" => t.lr_factor = parse_value(key, v)?,
            "batching" => t.batching = v.parse().map_err(|e| anyhow!("batching: {e}"))?,
            "select_best" => t.select_best = parse_value(key, v)?,
            "train_epsilon" => t.attack.epsilon = parse_value(key, v)?,
            "train_step_size" => t.attack.step_size = parse_value(key, v)?,
            "train_steps" => t.attack.steps = parse_value(key, v)?,
            "train_random_start" => t.attack.random_start = parse_value(key, v)?,
            "eval_epsilon" => self.eval_attack.epsilon = parse_value(key, v)?,
            "eval_step_size" => self.eval_attack.step_size = parse_value(key, v)?,
            "eval_steps" => self.eval_attack.steps = parse_value(key, v)?,
            "eval_random_start" => self.eval_attack.random_start = parse_value(key, v)?,
            "data" => self.data = v.parse()?,
            "data_seed" => self.data_seed = if v.is_empty() { None } else { Some(parse_value(key, v)?) },
            "num_classes" => self.num_classes = parse_value(key, v)?,
            "mixture_means" => {
                self.mixture_means = v
                    .split(';')
                    .filter(|m| !m.trim().is_empty())
                    .map(|m| parse_list(key, m))
                    .collect::<Result<_>>()?
            }
            "mixture_spread" => self.mixture_spread = parse_value(key, v)?,
            "train_per_class" => self.train_per_class = parse_value(key, v)?,
            "test_per_class" => self.test_per_class = parse_value(key, v)?,
            "train_images" => self.train_images = v.to_string(),
            "train_labels" => self.train_labels = v.to_string(),
            "test_images" => self.test_images = v.to_string(),
            "test_labels" => self.test_labels = v.to_string(),
            "train_csv" => self.train_csv = v.to_string(),
            "test_csv" => self.test_csv = v.to_string(),
            "csv_label_column" => self.csv_label_column = parse_value(key, v)?,
            "csv_header" => self.csv_header = parse_value(key, v)?,
            "csv_normalize" => self.csv_normalize = parse_value(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            other => bail!("unknown configuration key {other:?}"),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let a = &t.attack;
        let e = &self.eval_attack;
        Some(match key {
            "preset" => self.preset.clone(),
            "method" => t.method.to_string(),
            "eta" => t.eta.to_string(),
            "fixed_weights" => t.fixed_weights.as_ref().map_or_else(String::new, |w| join(w.weights())),
            "seed" => t.seed.to_string(),
            "hidden" => join(&t.hidden),
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "lr" => t.base_lr.to_string(),
            "momentum" => t.momentum.to_string(),
            "weight_decay" => t.weight_decay.to_string(),
            "lr_milestones" => join(&t.lr_milestones),
            "lr_factor" => t.lr_factor.to_string(),
            "batching" => t.batching.to_string(),
            "select_best" => t.select_best.to_string(),
            "train_epsilon" => a.epsilon.to_string(),
            "train_step_size" => a.step_size.to_string(),
            "train_steps" => a.steps.to_string(),
            "train_random_start" => a.random_start.to_string(),
            "eval_epsilon" => e.epsilon.to_string(),
            "eval_step_size" => e.step_size.to_string(),
            "eval_steps" => e.steps.to_string(),
            "eval_random_start" => e.random_start.to_string(),
            "data" => self.data.as_str().to_string(),
            "data_seed" => self.data_seed.map_or_else(String::new, |s| s.to_string()),
            "num_classes" => self.num_classes.to_string(),
            "mixture_means" => self.mixture_means.iter().map(|m| join(m)).collect::<Vec<_>>().join(";"),
            "mixture_spread" => self.mixture_spread.to_string(),
            "train_per_class" => self.train_per_class.to_string(),
            "test_per_class" => self.test_per_class.to_string(),
            "train_images" => self.train_images.clone(),
            "train_labels" => self.train_labels.clone(),
            "test_images" => self.test_images.clone(),
            "test_labels" => self.test_labels.clone(),
            "train_csv" => self.train_csv.clone(),
            "test_csv" => self.test_csv.clone(),
            "csv_label_column" => self.csv_label_column.to_string(),
            "csv_header" => self.csv_header.to_string(),
            "csv_normalize" => self.csv_normalize.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            _ => return None,
        })
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter().map(|&k| (k, self.get(k).expect("listed key"))).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn to_map(&self) -> std::collections::BTreeMap<String, String> {
        self.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Number of classes known before any data is read.
    pub fn classes(&self) -> usize {
        match self.data {
            DataKind::Mixture => self.mixture_means.len(),
            _ => self.num_classes,
        }
    }

    /// Cross-field checks, run before any work starts.
    pub fn validate(&self) -> Result<()> {
        let k = self.classes();
        if k < 2 {
            bail!("num_classes: need at least 2 classes, got {k}");
        }
        if self.train.method == Method::Codat && self.train.eta >= (k - 1) as f64 {
            bail!(
                "eta: {} violates eta < K - 1 = {} for K = {k} classes (the chi-square distance from uniform to a one-class distribution)",
                self.train.eta,
                k - 1
            );
        }
        self.train.validate(k).map_err(|e| anyhow!("{e}"))?;
        self.eval_attack.validate().map_err(|e| anyhow!("eval attack: {e}"))?;
        match self.data {
            DataKind::Mixture => {
                if self.num_classes != k {
                    bail!("num_classes: {} does not match the {k} mixture means", self.num_classes);
                }
                self.mixture_spec().validate().map_err(|e| anyhow!("mixture: {e}"))?;
                if self.test_per_class == 0 {
                    bail!("test_per_class: must be positive");
                }
            }
            DataKind::Idx => {
                for (key, value) in [
                    ("train_images", &self.train_images),
                    ("train_labels", &self.train_labels),
                    ("test_images", &self.test_images),
                    ("test_labels", &self.test_labels),
                ] {
                    if value.is_empty() {
                        bail!("{key}: required when data = idx");
                    }
                }
            }
            DataKind::Csv => {
                for (key, value) in [("train_csv", &self.train_csv), ("test_csv", &self.test_csv)] {
                    if value.is_empty() {
                        bail!("{key}: required when data = csv");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn mixture_spec(&self) -> MixtureSpec {
        MixtureSpec {
            num_classes: self.mixture_means.len(),
            dim: self.mixture_means.first().map_or(0, Vec::len),
            means: self.mixture_means.clone(),
            spread: self.mixture_spread,
            samples_per_class: self.train_per_class,
            seed: self.data_seed.unwrap_or(self.train.seed),
        }
    }

    /// Train and test splits.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        let (train, test) = match self.data {
            DataKind::Mixture => gen_mixture_split(&self.mixture_spec(), self.test_per_class)?,
            DataKind::Idx => (
                load_idx(Path::new(&self.train_images), Path::new(&self.train_labels))?,
                load_idx(Path::new(&self.test_images), Path::new(&self.test_labels))?,
            ),
            DataKind::Csv => {
                let spec = CsvSpec {
                    label_column: self.csv_label_column,
                    num_classes: self.num_classes,
                    has_header: self.csv_header,
                    normalize: self.csv_normalize,
                };
                (
                    load_csv(Path::new(&self.train_csv), &spec)?,
                    load_csv(Path::new(&self.test_csv), &spec)?,
                )
            }
        };
        for (name, ds) in [("train", &train), ("test", &test)] {
            if ds.num_classes() != self.classes() {
                bail!(
                    "num_classes: configured {} but the {name} split has {} classes",
                    self.classes(),
                    ds.num_classes()
                );
            }
        }
        if train.dim() != test.dim() {
            bail!(
                "train and test feature dimensions differ: {} vs {}",
                train.dim(),
                test.dim()
            );
        }
        Ok((train, test))
    }

    /// Data description hashed into checkpoints. The resolved data seed is
    /// included so that a default seed and an explicit equal one agree.
    pub fn data_tag(&self) -> String {
        let mut tag = String::new();
        for &k in DATA_KEYS {
            let _ = write!(tag, "{k}={};", self.get(k).expect("data key"));
        }
        if self.data == DataKind::Mixture {
            let _ = write!(tag, "data_seed={}", self.data_seed.unwrap_or(self.train.seed));
        }
        tag
    }

    /// `{method}_{preset}_eta{eta}_seed{seed}`.
    pub fn run_name(&self) -> String {
        format!(
            "{}_{}_eta{}_seed{}",
            self.train.method, self.preset, self.train.eta, self.train.seed
        )
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(self.run_name())
    }

    /// Ambiguity set implied by the config (uniform base distribution).
    pub fn ambiguity(&self) -> Result<AmbiguityConfig> {
        Ok(AmbiguityConfig::uniform(self.classes(), self.train.eta)?)
    }
}

/// `key = value` lines; `#` starts a comment; blank lines are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got {raw:?}", n + 1))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            bail!("line {}: unknown configuration key {k:?}", n + 1);
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// `key=value` from the command line.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("expected key=value, got {s:?}"))?;
    let k = k.trim();
    if !KEYS.contains(&k) {
        bail!("unknown configuration key {k:?}");
    }
    Ok((k.to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_config_reloads_identically() {
        for name in PRESETS {
            let mut cfg = RunConfig::preset(name).unwrap();
            cfg.train.eta = 0.1 + 0.2;
            cfg.data_seed = Some(7);
            cfg.train.fixed_weights = Some(ProbabilityDistribution::new(vec![0.25, 0.25, 0.5]).unwrap());
            let back = RunConfig::parse(&cfg.to_text()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_text(), cfg.to_text());
        }
    }

    #[test]
    fn later_sources_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, "preset = toy3\neta = 0.5 # comment\nepochs = 3\n").unwrap();
        let cfg = RunConfig::resolve(None, Some(&path), &[("eta".into(), "0.2".into())]).unwrap();
        assert_eq!(cfg.train.eta, 0.2);
        assert_eq!(cfg.train.epochs, 3);
        let cfg = RunConfig::resolve(Some("paper-cifar"), Some(&path), &[]).unwrap();
        assert_eq!((cfg.preset.as_str(), cfg.train.epochs), ("paper-cifar", 3));
    }

    #[test]
    fn unknown_keys_and_bad_values_name_the_field() {
        assert!(parse_pairs("etaa = 1").unwrap_err().to_string().contains("etaa"));
        let mut cfg = RunConfig::toy3();
        assert!(cfg.set("epochs", "ten").unwrap_err().to_string().starts_with("epochs"));
        assert!(parse_override("foo=1").is_err());
    }

    #[test]
    fn eta_bound_uses_the_static_class_count() {
        let mut cfg = RunConfig::paper_cifar();
        cfg.train.eta = 9.5;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("eta < K - 1 = 9"), "{err}");
        let mut cfg = RunConfig::toy3();
        cfg.train.eta = 2.0;
        assert!(cfg.validate().is_err());
        cfg.train.method = Method::StandardAt;
        cfg.validate().unwrap();
    }

    #[test]
    fn data_tag_ignores_method_and_eta() {
        let a = RunConfig::toy3();
        let mut b = a.clone();
        b.train.method = Method::StandardAt;
        b.train.eta = 0.0;
        b.data_seed = Some(0);
        assert_eq!(a.data_tag(), b.data_tag());
        assert_eq!(a.run_name(), "codat_toy3_eta0.3_seed0");
    }
}
