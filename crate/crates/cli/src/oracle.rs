use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use codat_core::dro::{
    equivalent_objective, oracle_worst_case, worst_case_distribution, DEFAULT_ORACLE_ITERATIONS, DEFAULT_ORACLE_STEP,
};
use codat_core::rng::rng_for;
use codat_core::{AmbiguityConfig, ClassRiskVector};
use rand::Rng;
use serde::Serialize;

#[derive(Args, Clone, Debug, Serialize)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 2)]
    pub min_k: usize,
    #[arg(long, default_value_t = 10)]
    pub max_k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub min_eta: f64,
    #[arg(long, default_value_t = 0.9)]
    pub max_eta: f64,
    /// Fixed radius for every trial (overrides the range).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Risks are drawn uniformly from [0, max_risk].
    #[arg(long, default_value_t = 5.0)]
    pub max_risk: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_ORACLE_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value_t = DEFAULT_ORACLE_STEP)]
    pub step: f64,
    /// JSON report path (default: stdout summary only).
    #[arg(long)]
    #[serde(skip)]
    pub json: Option<PathBuf>,
}

impl Default for OracleArgs {
    fn default() -> Self {
        Self {
            trials: 200,
            min_k: 2,
            max_k: 10,
            min_eta: 0.05,
            max_eta: 0.9,
            eta: None,
            max_risk: 5.0,
            seed: 0,
            iterations: DEFAULT_ORACLE_ITERATIONS,
            step: DEFAULT_ORACLE_STEP,
            json: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub settings: OracleArgs,
    pub trials: usize,
    /// Instances where the closed form is a valid distribution.
    pub valid: usize,
    pub invalid: usize,
    /// Largest |oracle objective - closed-form objective| over valid trials.
    pub max_gap: f64,
    /// Largest l-infinity distance between the two distributions.
    pub max_linf: f64,
    pub mean_gap: f64,
}

impl OracleArgs {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials: must be at least 1");
        }
        if self.min_k < 2 || self.min_k > self.max_k {
            bail!(
                "min_k/max_k: need 2 <= min_k <= max_k, got {}..{}",
                self.min_k,
                self.max_k
            );
        }
        let (lo, hi) = self.eta.map_or((self.min_eta, self.max_eta), |e| (e, e));
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            bail!("eta: need 0 <= min_eta <= max_eta, got {lo}..{hi}");
        }
        if hi >= (self.min_k - 1) as f64 {
            bail!(
                "eta: {hi} violates eta < K - 1 = {} for K = {}",
                self.min_k - 1,
                self.min_k
            );
        }
        if !(self.max_risk > 0.0 && self.max_risk.is_finite()) {
            bail!("max_risk: must be positive");
        }
        Ok(())
    }
}

pub fn sweep(args: &OracleArgs) -> Result<OracleReport> {
    args.validate()?;
    let mut rng = rng_for(args.seed, &[]);
    let (mut valid, mut max_gap, mut max_linf, mut total_gap) = (0, 0.0f64, 0.0f64, 0.0);
    for _ in 0..args.trials {
        let k = rng.random_range(args.min_k..=args.max_k);
        let risks = ClassRiskVector::new((0..k).map(|_| rng.random_range(0.0..=args.max_risk)).collect())?;
        let eta = args
            .eta
            .unwrap_or_else(|| rng.random_range(args.min_eta..=args.max_eta));
        let cfg = AmbiguityConfig::uniform(k, eta)?;
        let closed = worst_case_distribution(&risks, &cfg)?;
        if !closed.closed_form_valid {
            continue;
        }
        valid += 1;
        let (p, value) = oracle_worst_case(&risks, &cfg, args.iterations, args.step)?;
        let gap = (value - equivalent_objective(&risks, &cfg)?).abs();
        let linf = p
            .weights()
            .iter()
            .zip(closed.distribution.weights())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        max_gap = max_gap.max(gap);
        max_linf = max_linf.max(linf);
        total_gap += gap;
    }
    Ok(OracleReport {
        settings: args.clone(),
        trials: args.trials,
        valid,
        invalid: args.trials - valid,
        max_gap,
        max_linf,
        mean_gap: if valid > 0 { total_gap / valid as f64 } else { 0.0 },
    })
}

pub fn run(args: &OracleArgs) -> Result<()> {
    let report = sweep(args)?;
    println!(
        "{} trials: {} valid, {} closed-form invalid; max gap {:.3e}, max linf {:.3e}, mean gap {:.3e}",
        report.trials, report.valid, report.invalid, report.max_gap, report.max_linf, report.mean_gap
    );
    if let Some(path) = &args.json {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(path, text)?;
    }
    Ok(())
}
