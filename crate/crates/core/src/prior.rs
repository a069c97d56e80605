//! Prior distributions over model parameters.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::StreamRng;
use crate::special::{norm_pdf, norm_sf};

/// Rejection sampling gives up below this acceptance probability.
pub const MIN_ACCEPTANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    /// Univariate normal restricted to `(lower, ∞)`.
    TruncatedNormal { mean: f64, variance: f64, lower: f64 },
    /// Independent uniforms on `[lower_k, upper_k]`; `lower_k == upper_k` pins a coordinate.
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

/// One parameter vector drawn from a prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterDraw {
    pub theta: Vec<f64>,
}

impl ParameterDraw {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta }
    }
}

impl PriorSpec {
    /// Truncated normal with mean one, variance one, restricted to `b > 0`.
    pub fn death_default() -> Self {
        PriorSpec::TruncatedNormal { mean: 1.0, variance: 1.0, lower: 0.0 }
    }

    /// `U(0, 0.5)` on both infection and recovery probability.
    pub fn sir_default() -> Self {
        PriorSpec::UniformBox { lower: vec![0.0, 0.0], upper: vec![0.5, 0.5] }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            PriorSpec::TruncatedNormal { .. } => 1,
            PriorSpec::UniformBox { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::TruncatedNormal { mean, variance, lower } => {
                if !(mean.is_finite() && lower.is_finite()) {
                    return Err(invalid("truncated normal mean and bound must be finite"));
                }
                if !(variance.is_finite() && *variance > 0.0) {
                    return Err(invalid(format!("variance {variance} must be positive")));
                }
            }
            PriorSpec::UniformBox { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(invalid("uniform box bounds must be non-empty and of equal length"));
                }
                for (k, (lo, hi)) in lower.iter().zip(upper).enumerate() {
                    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                        return Err(invalid(format!("uniform box dimension {k}: [{lo}, {hi}] is invalid")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Probability that an untruncated draw is accepted.
    pub fn acceptance_rate(&self) -> f64 {
        match self {
            PriorSpec::TruncatedNormal { mean, variance, lower } => {
                norm_sf((lower - mean) / variance.sqrt())
            }
            PriorSpec::UniformBox { .. } => 1.0,
        }
    }

    /// Per-dimension support `[lo, hi]` (hi may be infinite).
    pub fn support(&self) -> Vec<(f64, f64)> {
        match self {
            PriorSpec::TruncatedNormal { lower, .. } => vec![(*lower, f64::INFINITY)],
            PriorSpec::UniformBox { lower, upper } => {
                lower.iter().copied().zip(upper.iter().copied()).collect()
            }
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.param_dim()
            && theta.iter().all(|t| t.is_finite())
            && match self {
                PriorSpec::TruncatedNormal { lower, .. } => theta[0] > *lower,
                PriorSpec::UniformBox { lower, upper } => theta
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(t, (lo, hi))| t >= lo && t <= hi),
            }
    }

    /// Normalised density; zero outside the support. Degenerate uniform
    /// coordinates contribute a factor of one (a point mass has no density).
    pub fn density(&self, theta: &[f64]) -> f64 {
        if !self.contains(theta) {
            return 0.0;
        }
        match self {
            PriorSpec::TruncatedNormal { mean, variance, .. } => {
                let sd = variance.sqrt();
                norm_pdf((theta[0] - mean) / sd) / (sd * self.acceptance_rate())
            }
            PriorSpec::UniformBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| if hi > lo { 1.0 / (hi - lo) } else { 1.0 })
                .product(),
        }
    }

    pub fn is_point_mass(&self) -> bool {
        match self {
            PriorSpec::TruncatedNormal { .. } => false,
            PriorSpec::UniformBox { lower, upper } => lower.iter().zip(upper).all(|(a, b)| a == b),
        }
    }

    /// Mean of the prior, in closed form.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            PriorSpec::TruncatedNormal { mean, variance, lower } => {
                let sd = variance.sqrt();
                let alpha = (lower - mean) / sd;
                vec![mean + sd * norm_pdf(alpha) / norm_sf(alpha)]
            }
            PriorSpec::UniformBox { lower, upper } => {
                lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect()
            }
        }
    }

    pub fn sample_one(&self, rng: &mut StreamRng) -> Result<ParameterDraw> {
        match self {
            PriorSpec::TruncatedNormal { mean, variance, lower } => {
                let normal = Normal::new(*mean, variance.sqrt())
                    .map_err(|e| invalid(format!("normal prior: {e}")))?;
                loop {
                    let b = normal.sample(rng);
                    if b > *lower {
                        return Ok(ParameterDraw::new(vec![b]));
                    }
                }
            }
            PriorSpec::UniformBox { lower, upper } => Ok(ParameterDraw::new(
                lower
                    .iter()
                    .zip(upper)
                    .map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                    .collect(),
            )),
        }
    }
}

/// `count` i.i.d. draws from `prior`.
pub fn sample_prior(prior: &PriorSpec, count: usize, rng: &mut StreamRng) -> Result<Vec<ParameterDraw>> {
    if count == 0 {
        return Err(invalid("prior sample count must be positive"));
    }
    prior.validate()?;
    let acceptance = prior.acceptance_rate();
    if acceptance < MIN_ACCEPTANCE {
        return Err(Error::DegeneratePrior(format!(
            "truncation acceptance rate {acceptance:e} is below {MIN_ACCEPTANCE:e}"
        )));
    }
    (0..count).map(|_| prior.sample_one(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;

    #[test]
    fn uniform_box_draws_stay_inside() {
        let mut rng = RngSeed(3).rng();
        let draws = sample_prior(&PriorSpec::sir_default(), 1000, &mut rng).unwrap();
        assert_eq!(draws.len(), 1000);
        for d in &draws {
            assert!(d.theta.iter().all(|t| (0.0..=0.5).contains(t)));
        }
    }

    #[test]
    fn truncated_normal_draws_are_positive() {
        let mut rng = RngSeed(4).rng();
        let draws = sample_prior(&PriorSpec::death_default(), 5000, &mut rng).unwrap();
        assert!(draws.iter().all(|d| d.theta[0] > 0.0));
    }

    #[test]
    fn zero_count_is_rejected() {
        let mut rng = RngSeed(0).rng();
        assert!(matches!(
            sample_prior(&PriorSpec::death_default(), 0, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn far_truncation_is_degenerate() {
        let mut rng = RngSeed(0).rng();
        let prior = PriorSpec::TruncatedNormal { mean: 0.0, variance: 1.0, lower: 6.0 };
        assert!(matches!(sample_prior(&prior, 10, &mut rng), Err(Error::DegeneratePrior(_))));
    }

    #[test]
    fn acceptance_for_unit_truncated_normal() {
        // 1 - Φ(-1)
        let a = PriorSpec::death_default().acceptance_rate();
        assert!((a - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn point_mass_box() {
        let prior = PriorSpec::UniformBox { lower: vec![0.0], upper: vec![0.0] };
        let mut rng = RngSeed(1).rng();
        let draws = sample_prior(&prior, 10, &mut rng).unwrap();
        assert!(draws.iter().all(|d| d.theta == vec![0.0]));
        assert!(prior.is_point_mass());
    }
}
