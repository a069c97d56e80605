//! Mutual information for the Death model from its closed-form likelihood.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::UtilityEstimate;
use crate::design::DesignPoint;
use crate::error::{invalid, Error, Result};
use crate::prior::{ParameterDraw, PriorSpec};
use crate::rng::{tags, RngSeed};
use crate::simulators::{death_log_likelihood, simulate_death, DeathConfig};
use crate::special::gauss_legendre;

pub const MIN_QUADRATURE_NODES: usize = 8;

/// Gauss–Legendre rule for the marginal over the infection rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub nodes: usize,
    /// Upper end of the integration range for unbounded priors.
    pub upper: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { nodes: 256, upper: 6.0 }
    }
}

/// Nodes and log prior-weighted quadrature weights, normalised to sum to one.
pub(crate) fn prior_quadrature(prior: &PriorSpec, quad: &QuadratureConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if quad.nodes < MIN_QUADRATURE_NODES {
        return Err(invalid(format!(
            "quadrature needs at least {MIN_QUADRATURE_NODES} nodes, got {}",
            quad.nodes
        )));
    }
    if prior.param_dim() != 1 {
        return Err(Error::Unsupported("analytic utility needs a one-dimensional prior".into()));
    }
    let (lo, hi) = prior.support()[0];
    if lo == hi {
        return Ok((vec![lo], vec![0.0]));
    }
    let hi = if hi.is_finite() { hi } else { quad.upper };
    if !(hi > lo) {
        return Err(invalid(format!("quadrature range ({lo}, {hi}] is empty")));
    }
    let (nodes, weights) = gauss_legendre(quad.nodes, lo, hi);
    let raw: Vec<f64> = nodes.iter().zip(&weights).map(|(b, w)| w * prior.density(&[*b])).collect();
    let mass: f64 = raw.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::DegeneratePrior("prior has no mass on the quadrature range".into()));
    }
    Ok((nodes, raw.iter().map(|w| (w / mass).ln()).collect()))
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log marginal `log p(y | d)` by prior-weighted quadrature over `b`.
pub(crate) fn log_marginal(nodes: &[f64], log_weights: &[f64], design: &DesignPoint, y: &[u32], cfg: &DeathConfig) -> f64 {
    log_sum_exp(
        nodes
            .iter()
            .zip(log_weights)
            .map(|(&b, &lw)| lw + death_log_likelihood(b, design, y, cfg)),
    )
}

/// Mean over the bank of `log p(y_i | b_i, d) - log p(y_i | d)` with
/// `y_i` simulated at `b_i`.
pub fn analytic_mi_death(
    bank: &[ParameterDraw],
    prior: &PriorSpec,
    design: &DesignPoint,
    cfg: &DeathConfig,
    quad: &QuadratureConfig,
    seed: RngSeed,
) -> Result<UtilityEstimate> {
    cfg.validate()?;
    if bank.is_empty() {
        return Err(invalid("prior bank is empty"));
    }
    let (nodes, log_weights) = prior_quadrature(prior, quad)?;
    let values: Vec<f64> = bank
        .par_iter()
        .enumerate()
        .map(|(i, draw)| {
            let b = draw.theta[0];
            let mut rng = seed.stream(&[tags::ANALYTIC, i as u64]);
            let y = simulate_death(b, design, cfg, &mut rng)?;
            let ll = death_log_likelihood(b, design, &y.values, cfg);
            Ok(ll - log_marginal(&nodes, &log_weights, design, &y.values, cfg))
        })
        .collect::<Result<_>>()?;
    // No clipping: the values are exact log-ratios.
    UtilityEstimate::from_log_ratios(design.clone(), &values, f64::INFINITY, 0)
}
