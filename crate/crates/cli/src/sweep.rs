use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use codat_core::train::Method;

use crate::config::RunConfig;
use crate::train::{train_run, TrainOutcome, CONFIG_FILE};
use crate::ConfigArgs;

pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated radii, e.g. `0,0.1,0.3`.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub etas: Vec<f64>,
    /// Runs trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub eta: f64,
    pub outcome: TrainOutcome,
}

/// `codat_eta{eta}`, the method name used in the sweep CSV.
pub fn row_name(eta: f64) -> String {
    format!("codat_eta{eta}")
}

/// One validated CODAT config per radius. Duplicates are rejected.
pub fn plan(base: &RunConfig, etas: &[f64]) -> Result<Vec<RunConfig>> {
    if etas.is_empty() {
        bail!("etas: need at least one value");
    }
    for (i, a) in etas.iter().enumerate() {
        if etas[..i].contains(a) {
            bail!("etas: duplicate value {a}");
        }
    }
    etas.iter()
        .map(|&eta| {
            let mut cfg = base.clone();
            cfg.train.method = Method::Codat;
            cfg.train.eta = eta;
            cfg.validate().with_context(|| format!("eta = {eta}"))?;
            Ok(cfg)
        })
        .collect()
}

/// Train every planned run on up to `jobs` threads; results keep plan order.
pub fn execute(plan: &[RunConfig], jobs: usize) -> Result<Vec<SweepRow>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<TrainOutcome>>>> = Mutex::new((0..plan.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, plan.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= plan.len() {
                    break;
                }
                let out = train_run(&plan[i]);
                slots.lock().expect("sweep results")[i] = Some(out);
            });
        }
    });
    let slots = slots.into_inner().expect("sweep results");
    plan.iter()
        .zip(slots)
        .map(|(cfg, slot)| {
            let outcome = slot
                .ok_or_else(|| anyhow!("run was not executed"))?
                .with_context(|| format!("sweep run eta = {} failed", cfg.train.eta))?;
            Ok(SweepRow {
                eta: cfg.train.eta,
                outcome,
            })
        })
        .collect()
}

/// `method,eta,avg,wst,var,wall_time_s,elapsed_s`; robust accuracies;
/// `elapsed_s` is the running total of wall times.
pub fn write_csv(rows: &[SweepRow], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "eta", "avg", "wst", "var", "wall_time_s", "elapsed_s"])?;
    let mut elapsed = 0.0;
    for r in rows {
        elapsed += r.outcome.wall_time_s;
        let robust = &r.outcome.robust;
        w.write_record([
            row_name(r.eta),
            r.eta.to_string(),
            robust.average_accuracy.to_string(),
            robust.worst_class_accuracy.to_string(),
            robust.class_variance.to_string(),
            format!("{:.3}", r.outcome.wall_time_s),
            format!("{elapsed:.3}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_dir(base: &RunConfig) -> PathBuf {
    base.out_dir
        .join(format!("sweep_{}_seed{}", base.preset, base.train.seed))
}

pub fn run(args: &SweepArgs) -> Result<()> {
    let mut base = RunConfig::resolve(
        args.config.preset.as_deref(),
        args.config.config.as_deref(),
        &args.config.overrides()?,
    )?;
    base.train.method = Method::Codat;
    if args.config.print_config {
        print!("{}", base.to_text());
        return Ok(());
    }
    let plan = plan(&base, &args.etas)?;
    let rows = execute(&plan, args.jobs)?;
    let dir = sweep_dir(&base);
    std::fs::create_dir_all(&dir)?;
    let mut text = base.to_text();
    text.push_str(&format!(
        "# etas = {}\n",
        args.etas.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
    ));
    std::fs::write(dir.join(CONFIG_FILE), text)?;
    let path = dir.join(SWEEP_FILE);
    write_csv(&rows, &path)?;
    for (cfg, row) in plan.iter().zip(&rows) {
        println!("{}", row.outcome.summary_line(cfg));
    }
    println!("sweep table -> {}", path.display());
    Ok(())
}
