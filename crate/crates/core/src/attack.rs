//! L-infinity projected gradient attack.

use ndarray::{Array2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{loss_and_input_gradient, LabeledBatch, ModelParams};
use crate::rng::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub step_size: f64,
    pub steps: usize,
    pub random_start: bool,
}

impl AttackConfig {
    /// `epsilon` in `[0, 1)`, `steps >= 1`, and `step_size <= 2 * epsilon`
    /// (the step bound is waived for the zero-radius attack).
    pub fn new(epsilon: f64, step_size: f64, steps: usize, random_start: bool) -> Result<Self> {
        let cfg = Self {
            epsilon,
            step_size,
            steps,
            random_start,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::config("epsilon", format!("{} must lie in [0, 1)", self.epsilon)));
        }
        if self.steps == 0 {
            return Err(Error::config("attack_steps", "must be >= 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::config("attack_step", "must be positive"));
        }
        if self.epsilon > 0.0 && self.step_size > 2.0 * self.epsilon {
            return Err(Error::config(
                "attack_step",
                format!(
                    "step size {} exceeds 2 * epsilon = {}",
                    self.step_size,
                    2.0 * self.epsilon
                ),
            ));
        }
        Ok(())
    }

    /// Training attack on 8-bit images: eps 8/255, step 2/255, 10 steps.
    pub fn image_train() -> Self {
        Self {
            epsilon: 8.0 / 255.0,
            step_size: 2.0 / 255.0,
            steps: 10,
            random_start: true,
        }
    }

    /// Evaluation attack on 8-bit images: eps 8/255, step 1/255, 100 steps.
    pub fn image_eval() -> Self {
        Self {
            epsilon: 8.0 / 255.0,
            step_size: 1.0 / 255.0,
            steps: 100,
            random_start: true,
        }
    }

    /// Short tag for reports, e.g. `pgd-20(eps=0.03,step=0.0075,rs)`.
    pub fn tag(&self) -> String {
        format!(
            "pgd-{}(eps={},step={},{})",
            self.steps,
            self.epsilon,
            self.step_size,
            if self.random_start { "rs" } else { "no-rs" }
        )
    }
}

fn clamp_into_ball(candidate: f64, anchor: f64, epsilon: f64) -> f64 {
    let mut v = candidate.clamp(anchor - epsilon, anchor + epsilon).clamp(0.0, 1.0);
    // anchor +- epsilon is rounded; walk back inside the ball by ulps.
    while (v - anchor).abs() > epsilon {
        v = if v > anchor { v.next_down() } else { v.next_up() };
    }
    v
}

/// Clamp entrywise to `[anchor - eps, anchor + eps]`, then to `[0, 1]`.
pub fn project_linf(candidate: &Array2<f64>, anchor: &Array2<f64>, epsilon: f64) -> Result<Array2<f64>> {
    if candidate.dim() != anchor.dim() {
        return Err(Error::DimensionMismatch {
            context: "project_linf",
            expected: anchor.len(),
            actual: candidate.len(),
        });
    }
    if candidate.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("project_linf candidate".into()));
    }
    Ok(Zip::from(candidate)
        .and(anchor)
        .map_collect(|&c, &a| clamp_into_ball(c, a, epsilon)))
}

/// The uniform random start used by [`pgd_attack`] for the same seed.
pub fn random_start_point(features: &Array2<f64>, epsilon: f64, seed: u64) -> Result<Array2<f64>> {
    if epsilon == 0.0 {
        return Ok(features.clone());
    }
    let mut rng = rng_for(seed, &[]);
    let noisy = features.mapv(|v| v + rng.random_range(-epsilon..=epsilon));
    project_linf(&noisy, features, epsilon)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// PGD against the unweighted cross-entropy. The output satisfies
/// `|x' - x|_inf <= epsilon` and `x' in [0, 1]` exactly.
pub fn pgd_attack(model: &ModelParams, batch: &LabeledBatch, cfg: &AttackConfig, seed: u64) -> Result<Array2<f64>> {
    cfg.validate()?;
    let anchor = batch.features();
    if anchor.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "pgd_attack input features",
            expected: model.input_dim(),
            actual: anchor.ncols(),
        });
    }
    if cfg.epsilon == 0.0 {
        return Ok(anchor.clone());
    }
    let mut x = if cfg.random_start {
        random_start_point(anchor, cfg.epsilon, seed)?
    } else {
        anchor.clone()
    };
    for step in 0..cfg.steps {
        let (_, grad) = loss_and_input_gradient(model, x.view(), batch.labels())?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("input gradient at PGD step {step}")));
        }
        Zip::from(&mut x)
            .and(&grad)
            .for_each(|x, &g| *x += cfg.step_size * sign(g));
        x = project_linf(&x, anchor, cfg.epsilon)?;
    }
    Ok(x)
}
