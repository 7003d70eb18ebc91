//! Chi-square constrained distributionally robust weighting over classes.
//!
//! The inner problem is
//!
//! ```text
//! max_P  E_P[R]   s.t.  chi2(P, P0) <= eta,  P on the simplex
//! ```
//!
//! where `R` is the vector of per-class robust risks. When the maximizer stays
//! nonnegative it has the closed form
//!
//! ```text
//! p*(k) = p0(k) + p0(k) * sqrt(eta / Var_P0[R]) * (R_k - E_P0[R])
//! ```
//!
//! with optimal value `E_P0[R] + sqrt(eta * Var_P0[R])`. Outside that regime
//! the projected-ascent oracle in this module supplies the constrained
//! optimum instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(p) == 1` for a valid distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Variances below this are treated as exactly zero.
pub const ZERO_VARIANCE: f64 = 1e-12;

/// Constraint residual tolerance used by the oracle projection.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_ORACLE_ITERATIONS: usize = 5000;
pub const DEFAULT_ORACLE_STEP: f64 = 0.01;

const PROJECTION_BISECTIONS: usize = 200;

/// A point on the probability simplex with at least two atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityDistribution {
    weights: Vec<f64>,
}

impl ProbabilityDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least 2 classes, got {}",
                weights.len()
            )));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} is {w}, expected a finite nonnegative value"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}, expected 1")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidDistribution(format!("need at least 2 classes, got {k}")));
        }
        Ok(Self {
            weights: vec![1.0 / k as f64; k],
        })
    }

    /// All mass on `index`.
    pub fn dirac(k: usize, index: usize) -> Result<Self> {
        if index >= k {
            return Err(Error::InvalidDistribution(format!(
                "dirac index {index} out of range for {k} classes"
            )));
        }
        let mut weights = vec![0.0; k];
        weights[index] = 1.0;
        Self::new(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }
}

impl TryFrom<Vec<f64>> for ProbabilityDistribution {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<ProbabilityDistribution> for Vec<f64> {
    fn from(p: ProbabilityDistribution) -> Self {
        p.weights
    }
}

/// Per-class average robust risk.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassRiskVector {
    risks: Vec<f64>,
}

impl ClassRiskVector {
    pub fn new(risks: Vec<f64>) -> Result<Self> {
        if risks.is_empty() {
            return Err(Error::Empty("risk vector".into()));
        }
        if let Some((i, r)) = risks.iter().enumerate().find(|(_, r)| !r.is_finite() || **r < 0.0) {
            return Err(Error::Domain(format!(
                "risk {i} is {r}, expected a finite nonnegative value"
            )));
        }
        Ok(Self { risks })
    }

    pub fn risks(&self) -> &[f64] {
        &self.risks
    }

    pub fn len(&self) -> usize {
        self.risks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.risks.is_empty()
    }
}

/// The chi-square ball `{P : chi2(P, p0) <= eta}` around the base distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbiguityConfig {
    p0: ProbabilityDistribution,
    eta: f64,
}

impl AmbiguityConfig {
    /// Validated radius: `0 <= eta < K - 1`. At `K - 1` the ball reaches the
    /// Dirac vertices of a uniform base.
    pub fn new(p0: ProbabilityDistribution, eta: f64) -> Result<Self> {
        let bound = (p0.len() - 1) as f64;
        if eta.is_nan() || eta >= bound {
            return Err(Error::config(
                "eta",
                format!(
                    "eta = {eta} must be < K - 1 = {bound} (the chi-square distance from uniform to a Dirac distribution)"
                ),
            ));
        }
        Self::unbounded(p0, eta)
    }

    /// Only requires a finite nonnegative radius. Used for mini-batches where
    /// some classes are absent and the effective K shrinks.
    pub fn unbounded(p0: ProbabilityDistribution, eta: f64) -> Result<Self> {
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::config("eta", format!("eta = {eta} must be finite and >= 0")));
        }
        Ok(Self { p0, eta })
    }

    pub fn uniform(k: usize, eta: f64) -> Result<Self> {
        Self::new(ProbabilityDistribution::uniform(k)?, eta)
    }

    pub fn p0(&self) -> &ProbabilityDistribution {
        &self.p0
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn num_classes(&self) -> usize {
        self.p0.len()
    }
}

/// Maximizer of the inner problem.
#[derive(Clone, Debug, PartialEq)]
pub struct WorstCaseSolution {
    pub distribution: ProbabilityDistribution,
    pub objective_value: f64,
    /// Optimal multiplier of the chi-square constraint; `None` when the
    /// variance or the radius is zero.
    pub alpha_star: Option<f64>,
    /// The closed form was nonnegative and is returned as-is.
    pub closed_form_valid: bool,
    /// Zero variance or zero radius: `p0` is returned.
    pub degenerate: bool,
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// `sum (p - p0)^2 / p0`.
///
/// A base whose entries are all equal is read as exactly `1/K` and the sum is
/// evaluated as `sum (K p - 1)^2 / K`, so that e.g. a Dirac point scores
/// exactly `K - 1` even though `1/K` itself is not representable.
pub fn chi_square_divergence(p: &ProbabilityDistribution, p0: &ProbabilityDistribution) -> Result<f64> {
    check_len("chi_square_divergence", p0.len(), p.len())?;
    let first = p0.weights()[0];
    if p0.weights().iter().all(|&q| q == first) {
        let k = p0.len() as f64;
        return Ok(p.weights().iter().map(|&pi| (k * pi - 1.0).powi(2)).sum::<f64>() / k);
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.weights().iter().zip(p0.weights()).enumerate() {
        if qi == 0.0 {
            if pi > 0.0 {
                return Err(Error::Domain(format!(
                    "p is not absolutely continuous w.r.t. p0: p[{i}] = {pi} where p0[{i}] = 0"
                )));
            }
            continue;
        }
        let d = pi - qi;
        total += d * d / qi;
    }
    Ok(total)
}

/// Mean and variance of the risks under `p0`. The variance is clamped at 0.
pub fn mean_variance_under(p0: &ProbabilityDistribution, risks: &ClassRiskVector) -> Result<(f64, f64)> {
    check_len("mean_variance_under", p0.len(), risks.len())?;
    let (mean, second) = p0
        .weights()
        .iter()
        .zip(risks.risks())
        .fold((0.0, 0.0), |(m, s), (&w, &r)| (m + w * r, s + w * r * r));
    Ok((mean, (second - mean * mean).max(0.0)))
}

fn is_degenerate(variance: f64, eta: f64) -> bool {
    variance < ZERO_VARIANCE || eta == 0.0
}

/// Worst-case class distribution inside the ambiguity set.
///
/// Returns the closed form when it is entrywise nonnegative, otherwise the
/// numeric oracle optimum with `closed_form_valid = false`. Zero variance or
/// zero radius returns `p0` with the mean as objective.
pub fn worst_case_distribution(risks: &ClassRiskVector, cfg: &AmbiguityConfig) -> Result<WorstCaseSolution> {
    let p0 = cfg.p0();
    let (mean, variance) = mean_variance_under(p0, risks)?;
    let eta = cfg.eta();

    if is_degenerate(variance, eta) {
        return Ok(WorstCaseSolution {
            distribution: p0.clone(),
            objective_value: mean,
            alpha_star: None,
            closed_form_valid: true,
            degenerate: true,
        });
    }

    let scale = (eta / variance).sqrt();
    let closed: Vec<f64> = p0
        .weights()
        .iter()
        .zip(risks.risks())
        .map(|(&q, &r)| q + q * scale * (r - mean))
        .collect();
    let alpha_star = Some(0.5 * (variance / eta).sqrt());

    if closed.iter().all(|&w| w >= 0.0) {
        // Entries sum to 1 up to round-off; the deviation terms cancel in
        // exact arithmetic.
        let distribution = ProbabilityDistribution::new(closed)?;
        return Ok(WorstCaseSolution {
            distribution,
            objective_value: mean + (eta * variance).sqrt(),
            alpha_star,
            closed_form_valid: true,
            degenerate: false,
        });
    }

    let (distribution, objective_value) =
        oracle_worst_case(risks, cfg, DEFAULT_ORACLE_ITERATIONS, DEFAULT_ORACLE_STEP)?;
    Ok(WorstCaseSolution {
        distribution,
        objective_value,
        alpha_star,
        closed_form_valid: false,
        degenerate: false,
    })
}

/// `alpha* = sqrt(Var / eta) / 2`.
pub fn lagrange_multiplier_star(risks: &ClassRiskVector, cfg: &AmbiguityConfig) -> Result<f64> {
    let (_, variance) = mean_variance_under(cfg.p0(), risks)?;
    if variance < ZERO_VARIANCE {
        return Err(Error::Domain("alpha* is undefined for zero-variance risks".into()));
    }
    if cfg.eta() == 0.0 {
        return Err(Error::Domain("alpha* is undefined for eta = 0".into()));
    }
    Ok(0.5 * (variance / cfg.eta()).sqrt())
}

/// Optimal likelihood ratio `L*(k) = 1 + (R_k - E_P0[R]) / (2 alpha)`.
pub fn likelihood_ratio(risks: &ClassRiskVector, p0: &ProbabilityDistribution, alpha: f64) -> Result<Vec<f64>> {
    let (mean, _) = mean_variance_under(p0, risks)?;
    Ok(risks
        .risks()
        .iter()
        .map(|&r| 1.0 + (r - mean) / (2.0 * alpha))
        .collect())
}

/// `E_P0[R] + sqrt(eta * Var_P0[R])`.
pub fn equivalent_objective(risks: &ClassRiskVector, cfg: &AmbiguityConfig) -> Result<f64> {
    let (mean, variance) = mean_variance_under(cfg.p0(), risks)?;
    if variance < ZERO_VARIANCE {
        return Ok(mean);
    }
    Ok(mean + (cfg.eta() * variance).sqrt())
}

/// Gradient of [`equivalent_objective`] with respect to the risk vector.
///
/// Analytically this is the closed-form `p*`. Zero variance returns `p0`.
pub fn equivalent_objective_gradient(risks: &ClassRiskVector, cfg: &AmbiguityConfig) -> Result<Vec<f64>> {
    let p0 = cfg.p0();
    let (mean, variance) = mean_variance_under(p0, risks)?;
    if is_degenerate(variance, cfg.eta()) {
        return Ok(p0.weights().to_vec());
    }
    let scale = (cfg.eta() / variance).sqrt();
    Ok(p0
        .weights()
        .iter()
        .zip(risks.risks())
        .map(|(&q, &r)| q + q * scale * (r - mean))
        .collect())
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn simplex_project(v: &[f64]) -> Result<ProbabilityDistribution> {
    if v.len() < 2 {
        return Err(Error::InvalidDistribution(format!(
            "need at least 2 entries, got {}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("simplex_project input".into()));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // Round-off can leave the sum a few ulps away from 1.
    let sum: f64 = out.iter().sum();
    if sum > 0.0 && (sum - 1.0).abs() > f64::EPSILON {
        out.iter_mut().for_each(|x| *x /= sum);
    }
    ProbabilityDistribution::new(out)
}

/// Feasible set of the oracle expressed in whitened coordinates
/// `z = (p - p0) / sqrt(p0)`, restricted to the support of `p0`.
///
/// In these coordinates `chi2(p, p0) = |z|^2`, the simplex sum constraint is
/// the hyperplane `u . z = 0` with the unit vector `u = sqrt(p0)`, and
/// nonnegativity is the box `z >= -u`.
struct WhitenedBall {
    u: Vec<f64>,
    radius: f64,
}

impl WhitenedBall {
    fn residual(&self, z: &[f64]) -> f64 {
        let along: f64 = self.u.iter().zip(z).map(|(u, z)| u * z).sum();
        let sq: f64 = z.iter().map(|z| z * z).sum();
        let below = self.u.iter().zip(z).map(|(u, z)| -u - z).fold(0.0, f64::max);
        along.abs().max(sq - self.radius * self.radius).max(below)
    }

    /// Projection of `a` onto `{u . z = 0, z >= -u}`: `z = max(a - lambda u, -u)`
    /// with `lambda` found exactly from the sorted breakpoints.
    fn project_plane_box(&self, a: &[f64]) -> Vec<f64> {
        let n = a.len();
        // z_i is clamped once lambda >= a_i / u_i + 1.
        let mut order: Vec<(f64, usize)> = (0..n).map(|i| (a[i] / self.u[i] + 1.0, i)).collect();
        order.sort_by(|x, y| x.0.total_cmp(&y.0));
        // Free set = indices whose breakpoint exceeds lambda; walk it down from
        // "all free" and stop at the first region containing its own root.
        let mut free_au: f64 = (0..n).map(|i| self.u[i] * a[i]).sum();
        let mut free_uu: f64 = self.u.iter().map(|u| u * u).sum();
        let total_uu = free_uu;
        let mut lambda = free_au / free_uu;
        for j in 0..n {
            let lo = if j == 0 { f64::NEG_INFINITY } else { order[j - 1].0 };
            let hi = order[j].0;
            lambda = (free_au - (total_uu - free_uu)) / free_uu;
            if lambda >= lo && lambda < hi {
                break;
            }
            let i = order[j].1;
            free_au -= self.u[i] * a[i];
            free_uu -= self.u[i] * self.u[i];
            if free_uu <= 0.0 {
                break;
            }
        }
        (0..n).map(|i| (a[i] - lambda * self.u[i]).max(-self.u[i])).collect()
    }

    /// Euclidean projection onto ball-in-hyperplane intersected with the box.
    ///
    /// The ball constraint enters as `z(c) = P(c y)` for some `c` in `(0, 1]`
    /// (`c = 1 / (1 + nu)` with `nu` its multiplier); `|z(c)|` is monotone in
    /// `c`, so `c` is found by bisection.
    fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        let full = self.project_plane_box(y);
        let norm = |z: &[f64]| z.iter().map(|z| z * z).sum::<f64>().sqrt();
        let z = if norm(&full) <= self.radius {
            full
        } else {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut inside = vec![0.0; y.len()];
            for _ in 0..PROJECTION_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let scaled: Vec<f64> = y.iter().map(|v| v * mid).collect();
                let z = self.project_plane_box(&scaled);
                if norm(&z) <= self.radius {
                    lo = mid;
                    inside = z;
                } else {
                    hi = mid;
                }
            }
            inside
        };
        let residual = self.residual(&z);
        if residual.is_nan() || residual > ORACLE_TOLERANCE {
            return Err(Error::OracleInfeasible(format!(
                "projection residual {residual:.3e} exceeds {ORACLE_TOLERANCE:e}"
            )));
        }
        Ok(z)
    }
}

const MAX_ORACLE_STEP: f64 = 1e3;
const FIXED_POINT_TOLERANCE: f64 = 1e-14;

/// Brute-force maximizer of `E_P[R]` over the chi-square ball intersected
/// with the simplex, by projected gradient ascent seeded at `p0`.
///
/// Steps are taken along the normalized ascent direction (the step doubles
/// while iterates stall against a face) and projected back onto the feasible
/// set exactly; every iterate satisfies the constraints within
/// [`ORACLE_TOLERANCE`].
/// Returns the best feasible iterate and its objective.
pub fn oracle_worst_case(
    risks: &ClassRiskVector,
    cfg: &AmbiguityConfig,
    iterations: usize,
    step_size: f64,
) -> Result<(ProbabilityDistribution, f64)> {
    if iterations == 0 {
        return Err(Error::config("iterations", "must be >= 1"));
    }
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::config("step_size", "must be positive and finite"));
    }
    let p0 = cfg.p0();
    check_len("oracle_worst_case", p0.len(), risks.len())?;
    let r = risks.risks();
    let objective = |p: &[f64]| p.iter().zip(r).map(|(p, r)| p * r).sum::<f64>();

    // Atoms with p0 = 0 must stay at 0 by absolute continuity.
    let support: Vec<usize> = (0..p0.len()).filter(|&i| p0.weights()[i] > 0.0).collect();
    let ball = WhitenedBall {
        u: support.iter().map(|&i| p0.weights()[i].sqrt()).collect(),
        radius: cfg.eta().sqrt(),
    };
    let grad: Vec<f64> = support.iter().zip(&ball.u).map(|(&i, u)| u * r[i]).collect();
    let along: f64 = grad.iter().zip(&ball.u).map(|(g, u)| g * u).sum();
    let tangent: Vec<f64> = grad.iter().zip(&ball.u).map(|(g, u)| g - along * u).collect();
    let norm = tangent.iter().map(|g| g * g).sum::<f64>().sqrt();

    let to_distribution = |z: &[f64]| -> Vec<f64> {
        let mut p = vec![0.0; p0.len()];
        for ((&i, z), u) in support.iter().zip(z).zip(&ball.u) {
            p[i] = (u * u + u * z).max(0.0);
        }
        p
    };

    let mut best = p0.weights().to_vec();
    let mut best_value = objective(&best);
    if cfg.eta() == 0.0 || norm < f64::EPSILON {
        return Ok((p0.clone(), best_value));
    }
    let direction: Vec<f64> = tangent.iter().map(|g| g / norm).collect();

    let mut z = vec![0.0; support.len()];
    let mut step = step_size;
    for _ in 0..iterations {
        let stepped: Vec<f64> = z.iter().zip(&direction).map(|(z, d)| z + step * d).collect();
        let next = ball.project(&stepped)?;
        // Pinned against a face: the objective is linear, so a longer step
        // only moves the projection further along the face.
        let moved = next.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let at_fixed_point = moved <= FIXED_POINT_TOLERANCE && step >= MAX_ORACLE_STEP;
        if moved < 0.5 * step && step < MAX_ORACLE_STEP {
            step *= 2.0;
        }
        z = next;
        let p = to_distribution(&z);
        let value = objective(&p);
        if value > best_value {
            best_value = value;
            best = p;
        }
        if at_fixed_point {
            break;
        }
    }

    let distribution = simplex_project(&best)?;
    let value = objective(distribution.weights());
    Ok((distribution, value))
}
