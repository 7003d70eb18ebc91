//! Command-line front end: `train`, `evaluate`, `attack`, `fec`, `oracle`
//! and `sweep`.

pub mod config;
pub mod evaluate;
pub mod fec;
pub mod oracle;
pub mod sweep;
pub mod train;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "codat", version, about = "Class-distribution adversarial training toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write checkpoint, history and evaluation reports.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint, naturally or under PGD.
    Evaluate(evaluate::EvaluateArgs),
    /// Write per-example PGD perturbations and loss changes to CSV.
    Attack(evaluate::AttackArgs),
    /// Fairness Elasticity Coefficient table from reports or an accuracy CSV.
    Fec(fec::FecArgs),
    /// Compare the closed-form worst case with the brute-force oracle.
    Oracle(oracle::OracleArgs),
    /// Train CODAT once per eta and tabulate robust accuracy.
    Sweep(sweep::SweepArgs),
}

/// Configuration sources shared by the commands that need a run config.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base preset: toy3 or paper-cifar.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    /// Output root (default: $CODAT_OUT_DIR, else `runs`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Any config key, e.g. `--set hidden=64,64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

impl ConfigArgs {
    pub fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = self
            .set
            .iter()
            .map(|s| config::parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        for (key, value) in [
            ("method", &self.method),
            ("eta", &self.eta),
            ("seed", &self.seed),
            ("epochs", &self.epochs),
        ] {
            if let Some(v) = value {
                out.push((key.to_string(), v.clone()));
            }
        }
        if let Some(dir) = &self.out_dir {
            out.push(("out_dir".into(), dir.display().to_string()));
        }
        Ok(out)
    }

    /// Resolve and validate. `fallback_file` is used when `--config` is absent.
    /// With `--print-config` only parsing is checked, so incomplete templates
    /// (a preset without data paths) can still be printed.
    pub fn resolve(&self, fallback_file: Option<PathBuf>) -> Result<RunConfig> {
        let file = self.config.clone().or(fallback_file);
        let cfg = RunConfig::resolve(self.preset.as_deref(), file.as_deref(), &self.overrides()?)?;
        if !self.print_config {
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train::run(&a),
        Command::Evaluate(a) => evaluate::run_evaluate(&a),
        Command::Attack(a) => evaluate::run_attack(&a),
        Command::Fec(a) => fec::run(&a),
        Command::Oracle(a) => oracle::run(&a),
        Command::Sweep(a) => sweep::run(&a),
    }
}

/// Parse `args` (including the program name) and run.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}
