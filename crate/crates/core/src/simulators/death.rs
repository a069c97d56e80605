//! Death model: a pure-infection binomial chain with a closed-form likelihood.

use serde::{Deserialize, Serialize};

use super::{binomial, check_dt, measurement_steps, SimOutcome, Simulator};
use crate::design::DesignPoint;
use crate::error::{invalid, Result};
use crate::rng::StreamRng;
use crate::special::ln_choose;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeathConfig {
    pub population: u32,
    pub dt: f64,
    #[serde(default)]
    pub initial_infected: u32,
}

impl Default for DeathConfig {
    fn default() -> Self {
        Self { population: 50, dt: 0.01, initial_infected: 0 }
    }
}

impl DeathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(invalid("population must be positive"));
        }
        check_dt(self.dt)?;
        if self.initial_infected > self.population {
            return Err(invalid("initial infected exceeds population"));
        }
        Ok(())
    }
}

/// Probability `1 - exp(-b t)` that a susceptible is infected within `t`.
pub fn death_infection_prob(b: f64, t: f64) -> Result<f64> {
    if !(b >= 0.0 && t >= 0.0) {
        return Err(invalid(format!("infection rate {b} and duration {t} must be non-negative")));
    }
    Ok(-(-b * t).exp_m1())
}

fn check_rate(b: f64) -> Result<()> {
    if b.is_finite() && b >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("infection rate {b} must be finite and non-negative")))
    }
}

/// Number infected at each design time.
///
/// Each susceptible survives a step with probability `exp(-b Δt)`
/// independently, so the infections accumulated over `s` steps from `S`
/// susceptibles are `Bin(S, 1 - exp(-b Δt s))`. Sampling once per
/// measurement interval gives the same joint law at the recorded times as
/// stepping the chain one `Δt` at a time.
pub fn simulate_death(b: f64, design: &DesignPoint, cfg: &DeathConfig, rng: &mut StreamRng) -> Result<SimOutcome> {
    check_rate(b)?;
    cfg.validate()?;
    let mut values = Vec::with_capacity(design.dim());
    run_intervals(b, design, cfg, rng, |i| values.push(i));
    Ok(SimOutcome { values })
}

fn run_intervals(b: f64, design: &DesignPoint, cfg: &DeathConfig, rng: &mut StreamRng, mut record: impl FnMut(u32)) {
    let mut infected = cfg.initial_infected;
    let mut last_step = 0u64;
    for step in measurement_steps(design, cfg.dt) {
        let elapsed = (step - last_step) as f64 * cfg.dt;
        let p = -(-b * elapsed).exp_m1();
        infected += binomial(rng, cfg.population - infected, p);
        last_step = step;
        record(infected);
    }
}

/// The chain stepped one `Δt` at a time: `ΔI ~ Bin(N - I, p_inf(Δt))`.
pub fn simulate_death_stepwise(
    b: f64,
    design: &DesignPoint,
    cfg: &DeathConfig,
    rng: &mut StreamRng,
) -> Result<SimOutcome> {
    check_rate(b)?;
    cfg.validate()?;
    let p = death_infection_prob(b, cfg.dt)?;
    let mut infected = cfg.initial_infected;
    let mut step = 0u64;
    let mut values = Vec::with_capacity(design.dim());
    for target in measurement_steps(design, cfg.dt) {
        while step < target {
            infected += binomial(rng, cfg.population - infected, p);
            step += 1;
        }
        values.push(infected);
    }
    Ok(SimOutcome { values })
}

/// Log-likelihood of observed infection counts.
///
/// With `S_k = N - I(τ_k)`, `τ_0 = 0` and `S_0 = N - I(0)`, the likelihood is
/// `∏_k Bin(S_k; S_{k-1}, exp(-b (τ_k - τ_{k-1})))`. Inconsistent data
/// (infections decreasing, counts above `N`, wrong length) gives `-∞`.
pub fn death_log_likelihood(b: f64, design: &DesignPoint, infected: &[u32], cfg: &DeathConfig) -> f64 {
    if infected.len() != design.dim() || !(b >= 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = cfg.population;
    let mut prev_s = n.saturating_sub(cfg.initial_infected);
    let mut prev_t = 0.0;
    let mut total = 0.0;
    for (&t, &i) in design.times().iter().zip(infected) {
        if i > n || n - i > prev_s {
            return f64::NEG_INFINITY;
        }
        let s = n - i;
        let rate = b * (t - prev_t);
        let dead = prev_s - s;
        // survival exp(-rate) for s, infection 1 - exp(-rate) for the rest
        if dead > 0 {
            if rate <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += f64::from(dead) * (-(-rate).exp_m1()).ln();
        }
        total += ln_choose(prev_s, s) - rate * f64::from(s);
        prev_s = s;
        prev_t = t;
    }
    total
}

/// Death model as a [`Simulator`]; parameter vector `[b]`.
#[derive(Clone, Debug, Default)]
pub struct DeathModel {
    pub config: DeathConfig,
}

impl DeathModel {
    pub fn new(config: DeathConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl Simulator for DeathModel {
    fn name(&self) -> &str {
        "death"
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn data_dim(&self, design_dim: usize) -> usize {
        design_dim
    }

    fn simulate_into(&self, theta: &[f64], design: &DesignPoint, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        if theta.len() != 1 || out.len() != design.dim() {
            return Err(invalid("death model expects one parameter and one output per design time"));
        }
        check_rate(theta[0])?;
        let mut k = 0;
        run_intervals(theta[0], design, &self.config, rng, |i| {
            out[k] = f64::from(i);
            k += 1;
        });
        Ok(())
    }

    fn death_config(&self) -> Option<&DeathConfig> {
        Some(&self.config)
    }
}
