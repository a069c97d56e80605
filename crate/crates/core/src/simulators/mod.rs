//! Stochastic epidemic simulators and the simulator interface used by the
//! ratio estimator.

mod death;
mod sir;

pub use death::{
    death_infection_prob, death_log_likelihood, simulate_death, simulate_death_stepwise,
    DeathConfig, DeathModel,
};
pub use sir::{simulate_sir, SirConfig, SirModel};

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::design::DesignPoint;
use crate::error::{invalid, Result};
use crate::rng::StreamRng;

/// Integer-valued simulator output at one design.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimOutcome {
    pub values: Vec<u32>,
}

impl SimOutcome {
    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

/// A model that can generate data at a design for a given parameter vector.
pub trait Simulator: Send + Sync {
    fn name(&self) -> &str;

    fn param_dim(&self) -> usize;

    /// Length of the data vector produced at a design of dimension `design_dim`.
    fn data_dim(&self, design_dim: usize) -> usize;

    /// Simulates one data vector into `out` (length `data_dim`).
    fn simulate_into(
        &self,
        theta: &[f64],
        design: &DesignPoint,
        rng: &mut StreamRng,
        out: &mut [f64],
    ) -> Result<()>;

    /// Death-model configuration, when this simulator has a tractable likelihood.
    fn death_config(&self) -> Option<&DeathConfig> {
        None
    }

    fn simulate(&self, theta: &[f64], design: &DesignPoint, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.data_dim(design.dim())];
        self.simulate_into(theta, design, rng, &mut out)?;
        Ok(out)
    }
}

/// Step indices at which each design time is recorded: `max(1, round(τ / Δt))`.
pub fn measurement_steps(design: &DesignPoint, dt: f64) -> Vec<u64> {
    design
        .times()
        .iter()
        .map(|&t| ((t / dt).round() as u64).max(1))
        .collect()
}

/// Largest distance between a design time and the step it is recorded at.
pub fn snapping_error(design: &DesignPoint, dt: f64) -> f64 {
    design
        .times()
        .iter()
        .zip(measurement_steps(design, dt))
        .map(|(t, s)| (t - s as f64 * dt).abs())
        .fold(0.0, f64::max)
}

/// Exact binomial draw.
pub(crate) fn binomial(rng: &mut StreamRng, n: u32, p: f64) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    // Binomial::new only fails for p outside [0, 1], excluded above.
    Binomial::new(u64::from(n), p).map_or(0, |b| b.sample(rng) as u32)
}

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {p} must lie in [0, 1]")))
    }
}

pub(crate) fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("time step {dt} must be positive")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_round_to_nearest() {
        let d = DesignPoint::new(vec![0.001, 0.3, 1.063, 4.0]).unwrap();
        assert_eq!(measurement_steps(&d, 0.01), vec![1, 30, 106, 400]);
        assert!((snapping_error(&d, 0.01) - 0.009).abs() < 1e-12);
    }
}
