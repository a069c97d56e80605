//! SIR model: susceptible → infected → recovered binomial chain.

use serde::{Deserialize, Serialize};

use super::{binomial, check_dt, check_probability, measurement_steps, SimOutcome, Simulator};
use crate::design::DesignPoint;
use crate::error::{invalid, Result};
use crate::rng::StreamRng;

/// Population and step size; the chain starts at `(N - 1, 1, 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirConfig {
    pub population: u32,
    pub dt: f64,
}

impl Default for SirConfig {
    fn default() -> Self {
        Self { population: 50, dt: 0.01 }
    }
}

impl SirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(invalid("population must be positive"));
        }
        check_dt(self.dt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct State {
    s: u32,
    i: u32,
    r: u32,
}

/// Advances `state` by `steps` steps of `Δt`.
///
/// Once nobody is infected the chain is frozen, and once nobody is
/// susceptible only recoveries remain; each infected then recovers
/// independently with probability `γ` per step, so the remaining steps are
/// collapsed into a single `Bin(I, 1 - (1 - γ)^steps)` draw.
fn advance(state: &mut State, mut steps: u64, beta: f64, gamma: f64, n: f64, rng: &mut StreamRng) {
    while steps > 0 {
        if state.i == 0 {
            return;
        }
        if state.s == 0 {
            let p = -((steps as f64) * (-gamma).ln_1p()).exp_m1();
            let recovered = binomial(rng, state.i, p);
            state.i -= recovered;
            state.r += recovered;
            return;
        }
        let p_inf = beta * f64::from(state.i) / n;
        let infected = binomial(rng, state.s, p_inf);
        let recovered = binomial(rng, state.i, gamma);
        state.s -= infected;
        state.i = state.i + infected - recovered;
        state.r += recovered;
        steps -= 1;
    }
}

fn run(
    beta: f64,
    gamma: f64,
    design: &DesignPoint,
    cfg: &SirConfig,
    rng: &mut StreamRng,
    mut record: impl FnMut(State),
) {
    let n = cfg.population;
    let mut state = State { s: n - 1, i: 1, r: 0 };
    let mut last = 0;
    for step in measurement_steps(design, cfg.dt) {
        advance(&mut state, step - last, beta, gamma, f64::from(n), rng);
        last = step;
        record(state);
    }
}

fn check_args(beta: f64, gamma: f64, cfg: &SirConfig) -> Result<()> {
    check_probability("beta", beta)?;
    check_probability("gamma", gamma)?;
    cfg.validate()
}

/// `[S(τ_1), I(τ_1), R(τ_1), …, S(τ_n), I(τ_n), R(τ_n)]`.
pub fn simulate_sir(
    beta: f64,
    gamma: f64,
    design: &DesignPoint,
    cfg: &SirConfig,
    rng: &mut StreamRng,
) -> Result<SimOutcome> {
    check_args(beta, gamma, cfg)?;
    let mut values = Vec::with_capacity(3 * design.dim());
    run(beta, gamma, design, cfg, rng, |st| values.extend([st.s, st.i, st.r]));
    Ok(SimOutcome { values })
}

/// SIR model as a [`Simulator`]; parameter vector `[β, γ]`.
#[derive(Clone, Debug, Default)]
pub struct SirModel {
    pub config: SirConfig,
}

impl SirModel {
    pub fn new(config: SirConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl Simulator for SirModel {
    fn name(&self) -> &str {
        "sir"
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn data_dim(&self, design_dim: usize) -> usize {
        3 * design_dim
    }

    fn simulate_into(&self, theta: &[f64], design: &DesignPoint, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        if theta.len() != 2 || out.len() != 3 * design.dim() {
            return Err(invalid("SIR model expects [beta, gamma] and three outputs per design time"));
        }
        check_args(theta[0], theta[1], &self.config)?;
        let mut k = 0;
        run(theta[0], theta[1], design, &self.config, rng, |st| {
            out[k] = f64::from(st.s);
            out[k + 1] = f64::from(st.i);
            out[k + 2] = f64::from(st.r);
            k += 3;
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;

    #[test]
    fn no_transitions_without_rates() {
        let d = DesignPoint::new(vec![0.1, 1.0, 3.0]).unwrap();
        let mut rng = RngSeed(1).rng();
        let y = simulate_sir(0.0, 0.0, &d, &SirConfig::default(), &mut rng).unwrap();
        assert_eq!(y.values, vec![49, 1, 0, 49, 1, 0, 49, 1, 0]);
    }

    #[test]
    fn certain_recovery_clears_the_infection() {
        let d = DesignPoint::new(vec![0.01, 0.5, 2.0]).unwrap();
        let mut rng = RngSeed(2).rng();
        let y = simulate_sir(0.0, 1.0, &d, &SirConfig::default(), &mut rng).unwrap();
        assert_eq!(y.values, vec![49, 0, 1, 49, 0, 1, 49, 0, 1]);
    }

    #[test]
    fn rejects_probabilities_outside_unit_interval() {
        let d = DesignPoint::single(1.0).unwrap();
        let mut rng = RngSeed(2).rng();
        assert!(simulate_sir(1.2, 0.1, &d, &SirConfig::default(), &mut rng).is_err());
        assert!(simulate_sir(0.1, -0.1, &d, &SirConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn trajectories_conserve_and_are_monotone() {
        let d = DesignPoint::new(vec![0.05, 0.3, 0.6, 1.0, 1.5, 2.0, 2.5, 3.0]).unwrap();
        let mut rng = RngSeed(3).rng();
        for (beta, gamma) in [(0.5, 0.01), (0.15, 0.05), (0.05, 0.4), (1.0, 0.0)] {
            for _ in 0..200 {
                let y = simulate_sir(beta, gamma, &d, &SirConfig::default(), &mut rng).unwrap().values;
                for t in y.chunks(3) {
                    assert_eq!(t[0] + t[1] + t[2], 50);
                }
                for w in y.chunks(3).collect::<Vec<_>>().windows(2) {
                    assert!(w[1][0] <= w[0][0]);
                    assert!(w[1][2] >= w[0][2]);
                }
            }
        }
    }
}
