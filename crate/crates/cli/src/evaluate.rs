use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use codat_core::data::Dataset;
use codat_core::metrics::{adversarial_features, evaluate};
use codat_core::nn::{cross_entropy_per_example, logits, ModelParams};
use codat_core::Checkpoint;

use crate::config::RunConfig;
use crate::train::CONFIG_FILE;
use crate::ConfigArgs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AttackKind {
    None,
    Pgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl SplitArg {
    fn as_str(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Test => "test",
        }
    }
}

/// Attack and data selection shared by `evaluate` and `attack`.
#[derive(Args, Clone, Debug)]
pub struct TargetArgs {
    /// Checkpoint JSON written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Overrides `eval_epsilon`.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Overrides `eval_step_size`.
    #[arg(long)]
    pub step_size: Option<f64>,
    /// Overrides `eval_steps`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Overrides `eval_random_start`.
    #[arg(long)]
    pub random_start: Option<bool>,
    /// Attack seed (default: the run seed).
    #[arg(long)]
    pub eval_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long, value_enum, default_value = "pgd")]
    pub attack: AttackKind,
    /// Output directory (default: the checkpoint's directory).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    /// Only the first N examples.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Output CSV (default: `attack_<split>.csv` next to the checkpoint).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

struct Target {
    cfg: RunConfig,
    model: ModelParams,
    data: Dataset,
    seed: u64,
    dir: PathBuf,
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

impl TargetArgs {
    /// The config defaults to the `config.txt` saved next to the checkpoint.
    fn load(&self) -> Result<Target> {
        let checkpoint = Checkpoint::load(&self.checkpoint)
            .with_context(|| format!("loading checkpoint {}", self.checkpoint.display()))?;
        let model = checkpoint.to_model()?;
        let dir = parent_dir(&self.checkpoint);
        let saved = dir.join(CONFIG_FILE);
        let mut cfg = self.config.resolve(saved.is_file().then_some(saved))?;
        let a = &mut cfg.eval_attack;
        if let Some(v) = self.epsilon {
            a.epsilon = v;
        }
        if let Some(v) = self.step_size {
            a.step_size = v;
        }
        if let Some(v) = self.steps {
            a.steps = v;
        }
        if let Some(v) = self.random_start {
            a.random_start = v;
        }
        cfg.validate()?;
        let (train, test) = cfg.load_data().context("loading data")?;
        let data = match self.split {
            SplitArg::Train => train,
            SplitArg::Test => test,
        };
        if data.dim() != model.input_dim() || data.num_classes() != model.num_classes() {
            bail!(
                "checkpoint expects {} features and {} classes, data has {} and {}",
                model.input_dim(),
                model.num_classes(),
                data.dim(),
                data.num_classes()
            );
        }
        let seed = self.eval_seed.unwrap_or(cfg.train.seed);
        Ok(Target {
            cfg,
            model,
            data,
            seed,
            dir,
        })
    }
}

pub fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let t = args.target.load()?;
    if args.target.config.print_config {
        print!("{}", t.cfg.to_text());
        return Ok(());
    }
    let attack = (args.attack == AttackKind::Pgd).then_some(&t.cfg.eval_attack);
    let mut report = evaluate(&t.model, &t.data, attack, t.seed)?;
    report.config = t.cfg.to_map();
    report
        .config
        .insert("checkpoint".into(), args.target.checkpoint.display().to_string());
    report.config.insert("split".into(), args.target.split.as_str().into());

    let dir = args.output.clone().unwrap_or(t.dir);
    std::fs::create_dir_all(&dir)?;
    let tag = match attack {
        Some(a) => format!("pgd{}", a.steps),
        None => "none".into(),
    };
    let stem = format!("evaluate_{}_{tag}", args.target.split.as_str());
    let json = dir.join(format!("{stem}.json"));
    report.save_json(&json)?;
    report.write_confusion_csv(&dir.join(format!("{stem}_confusion.csv")))?;
    println!(
        "{}: avg {:.4} wst {:.4} var {:.6} -> {}",
        report.attack,
        report.average_accuracy,
        report.worst_class_accuracy,
        report.class_variance,
        json.display()
    );
    Ok(())
}

pub fn run_attack(args: &AttackArgs) -> Result<()> {
    let t = args.target.load()?;
    if args.target.config.print_config {
        print!("{}", t.cfg.to_text());
        return Ok(());
    }
    let data = match args.limit {
        Some(0) => bail!("limit: must be positive"),
        Some(n) if n < t.data.len() => t.data.subset(&(0..n).collect::<Vec<_>>())?,
        _ => t.data,
    };
    let x = data.features();
    let adv = adversarial_features(&t.model, &data, &t.cfg.eval_attack, t.seed)?;
    let clean = cross_entropy_per_example(&logits(&t.model, x.view())?, data.labels())?;
    let attacked = cross_entropy_per_example(&logits(&t.model, adv.view())?, data.labels())?;

    let path = args
        .output
        .clone()
        .unwrap_or_else(|| t.dir.join(format!("attack_{}.csv", args.target.split.as_str())));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec![
        "index".to_string(),
        "label".into(),
        "clean_loss".into(),
        "adv_loss".into(),
        "loss_delta".into(),
        "linf".into(),
    ];
    header.extend((0..data.dim()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for i in 0..data.len() {
        let linf = adv
            .row(i)
            .iter()
            .zip(x.row(i))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let mut rec = vec![
            i.to_string(),
            data.labels()[i].to_string(),
            clean[i].to_string(),
            attacked[i].to_string(),
            (attacked[i] - clean[i]).to_string(),
            linf.to_string(),
        ];
        rec.extend(adv.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let mut sidecar = path.clone().into_os_string();
    sidecar.push(".config.txt");
    std::fs::write(&sidecar, t.cfg.to_text())?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "{} examples, {}: mean loss {:.4} -> {:.4} -> {}",
        data.len(),
        t.cfg.eval_attack.tag(),
        mean(&clean),
        mean(&attacked),
        path.display()
    );
    Ok(())
}
