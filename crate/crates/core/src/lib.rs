//! Class-level distributionally robust adversarial training on small MLPs.
//!
//! The inner chi-square problem over class weights has a closed form
//! ([`dro::worst_case_distribution`]) checked against a numeric oracle
//! ([`dro::oracle_worst_case`]). [`train`] wraps it in a PGD adversarial
//! training loop alongside the standard, fixed-weight and worst-class
//! baselines, and [`metrics`] reports per-class robust accuracy and the
//! fairness elasticity coefficient.

pub mod attack;
pub mod data;
pub mod dro;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod train;

pub use attack::{pgd_attack, project_linf, AttackConfig};
pub use data::{Dataset, MixtureSpec, Split};
pub use dro::{
    chi_square_divergence, equivalent_objective, equivalent_objective_gradient, lagrange_multiplier_star,
    likelihood_ratio, oracle_worst_case, simplex_project, worst_case_distribution, AmbiguityConfig, ClassRiskVector,
    ProbabilityDistribution, WorstCaseSolution,
};
pub use error::{Error, Result};
pub use metrics::{adversarial_features, evaluate, fec, fec_table, EvalReport, FecInputs, FecRow, MethodSummary};
pub use nn::{Checkpoint, LabeledBatch, ModelParams, OptimizerState};
pub use train::{
    class_avg_loss, codat_batch_loss, train_codat, train_standard_at, train_weighted, train_worst_class, Method,
    TrainConfig, TrainHistory,
};
