use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use codat_core::metrics::evaluate;
use codat_core::train::{train, TrainHistory};
use codat_core::{Checkpoint, EvalReport};

use crate::config::RunConfig;
use crate::ConfigArgs;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const CONFIG_FILE: &str = "config.txt";
pub const NATURAL_REPORT: &str = "eval_natural.json";
pub const ROBUST_REPORT: &str = "eval_robust.json";
pub const NATURAL_CONFUSION: &str = "confusion_natural.csv";
pub const ROBUST_CONFUSION: &str = "confusion_robust.csv";

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub natural: EvalReport,
    pub robust: EvalReport,
    pub history: TrainHistory,
    pub wall_time_s: f64,
}

impl TrainOutcome {
    pub fn summary_line(&self, cfg: &RunConfig) -> String {
        format!(
            "{} eta={} seed={}: natural avg {:.4} wst {:.4} | robust avg {:.4} wst {:.4} var {:.6} ({:.1}s) -> {}",
            cfg.train.method,
            cfg.train.eta,
            cfg.train.seed,
            self.natural.average_accuracy,
            self.natural.worst_class_accuracy,
            self.robust.average_accuracy,
            self.robust.worst_class_accuracy,
            self.robust.class_variance,
            self.wall_time_s,
            self.run_dir.display()
        )
    }
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let cfg = args.config.resolve(None)?;
    if args.config.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let outcome = train_run(&cfg)?;
    println!("{}", outcome.summary_line(&cfg));
    Ok(())
}

fn save_report(report: &EvalReport, dir: &Path, json: &str, confusion: &str) -> Result<()> {
    report.save_json(&dir.join(json))?;
    report.write_confusion_csv(&dir.join(confusion))?;
    Ok(())
}

/// Train, evaluate on the test split, write every artifact and read each one
/// back. `cfg` must already be validated.
pub fn train_run(cfg: &RunConfig) -> Result<TrainOutcome> {
    let start = Instant::now();
    let (train_data, test_data) = cfg.load_data().context("loading data")?;
    let dims = cfg.train.model_dims(train_data.dim(), train_data.num_classes());
    let hash = cfg.train.shared_hash(&dims, &cfg.data_tag())?;
    let eval = cfg.train.select_best.then_some(&test_data);
    let (model, history) = train(&cfg.train, &train_data, eval)?;

    let mut natural = evaluate(&model, &test_data, None, cfg.train.seed)?;
    let mut robust = evaluate(&model, &test_data, Some(&cfg.eval_attack), cfg.train.seed)?;
    natural.config = cfg.to_map();
    robust.config = cfg.to_map();

    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_text())?;
    let checkpoint = Checkpoint::from_model(&model, cfg.train.seed, hash);
    checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
    history.write_jsonl(&dir.join(HISTORY_FILE))?;
    save_report(&natural, &dir, NATURAL_REPORT, NATURAL_CONFUSION)?;
    save_report(&robust, &dir, ROBUST_REPORT, ROBUST_CONFUSION)?;

    if Checkpoint::load(&dir.join(CHECKPOINT_FILE))? != checkpoint {
        bail!("checkpoint did not read back identically");
    }
    let back = TrainHistory::read_jsonl(&dir.join(HISTORY_FILE))?;
    if back.records.len() != cfg.train.epochs {
        bail!("history has {} rows, expected {}", back.records.len(), cfg.train.epochs);
    }
    for (name, report) in [(NATURAL_REPORT, &natural), (ROBUST_REPORT, &robust)] {
        let text = std::fs::read_to_string(dir.join(name))?;
        if &serde_json::from_str::<EvalReport>(&text)? != report {
            bail!("{name} did not read back identically");
        }
    }
    Ok(TrainOutcome {
        run_dir: dir,
        natural,
        robust,
        history,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
