//! Expected utility: mutual information between parameters and data.
//!
//! For a design `d` and prior bank `{θ_i}`, each `θ_i` yields one data set
//! `y_i ~ p(y | θ_i, d)` and one fitted ratio model; the utility estimate is
//! the mean of the clipped `log r(d, y_i, θ_i)`.

mod analytic;

pub use analytic::{analytic_mi_death, QuadratureConfig};

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::DesignPoint;
use crate::error::{invalid, Error, Result};
use crate::lfire::{
    clip_log_ratio, fit_ratio, sample_marginal, FeatureKind, LfireConfig, MarginalDataset, RatioModel,
};
use crate::prior::{sample_prior, ParameterDraw, PriorSpec};
use crate::rng::{tags, RngSeed, StreamRng};
use crate::simulators::Simulator;

/// Default number of prior draws in the bank.
pub const DEFAULT_PRIOR_SAMPLES: usize = 1000;

/// How evaluation streams are assigned to successive utility evaluations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RngPolicy {
    /// Every evaluation uses the same stream (common random numbers).
    #[default]
    Common,
    /// Evaluation `k` uses its own stream.
    Fresh,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Lfire,
    Analytic { nodes: usize, upper: f64 },
}

impl Estimator {
    pub fn analytic() -> Self {
        let q = QuadratureConfig::default();
        Estimator::Analytic { nodes: q.nodes, upper: q.upper }
    }
}

/// Monte-Carlo utility estimate at one design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityEstimate {
    pub design: DesignPoint,
    /// Mean of the clipped per-sample log-ratios, in nats.
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub clip_count: usize,
    pub unconverged: usize,
    /// Clipped per-sample log-ratios, in prior-bank order.
    pub log_ratios: Vec<f64>,
}

impl UtilityEstimate {
    /// Clips `raw` to `[-clip, clip]` and summarises it.
    pub fn from_log_ratios(design: DesignPoint, raw: &[f64], clip: f64, unconverged: usize) -> Result<Self> {
        if raw.is_empty() {
            return Err(invalid("no log-ratios to average"));
        }
        let mut clip_count = 0;
        let log_ratios: Vec<f64> = raw
            .iter()
            .map(|&v| {
                let (c, clipped) = clip_log_ratio(v, clip);
                clip_count += usize::from(clipped);
                c
            })
            .collect();
        let (value, std_error) = mean_and_se(&log_ratios);
        Ok(Self { design, value, std_error, n_samples: log_ratios.len(), clip_count, unconverged, log_ratios })
    }
}

/// Sample mean and `sd / √n` (sample standard deviation, `n - 1` denominator).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Produces a ratio model for one prior draw.
pub trait RatioEstimator: Sync {
    fn fit(
        &self,
        design: &DesignPoint,
        theta: &[f64],
        simulator: &dyn Simulator,
        marginal: &MarginalDataset,
        cfg: &LfireConfig,
        rng: &mut StreamRng,
    ) -> Result<RatioModel>;
}

/// Logistic-regression ratio estimation.
pub struct Lfire;

impl RatioEstimator for Lfire {
    fn fit(
        &self,
        design: &DesignPoint,
        theta: &[f64],
        simulator: &dyn Simulator,
        marginal: &MarginalDataset,
        cfg: &LfireConfig,
        rng: &mut StreamRng,
    ) -> Result<RatioModel> {
        fit_ratio(design, theta, simulator, marginal, cfg, rng)
    }
}

/// Always returns the unit ratio.
pub struct IdentityRatio;

impl RatioEstimator for IdentityRatio {
    fn fit(
        &self,
        design: &DesignPoint,
        _theta: &[f64],
        simulator: &dyn Simulator,
        _marginal: &MarginalDataset,
        cfg: &LfireConfig,
        _rng: &mut StreamRng,
    ) -> Result<RatioModel> {
        let dim = simulator.data_dim(design.dim());
        Ok(RatioModel::identity(cfg.feature_kind(dim), dim))
    }
}

/// Everything needed to evaluate the utility at arbitrary designs. The prior
/// bank is drawn once and shared by every evaluation.
#[derive(Clone)]
pub struct UtilityObjective {
    simulator: Arc<dyn Simulator>,
    prior: PriorSpec,
    bank: Vec<ParameterDraw>,
    lfire: LfireConfig,
    seed: RngSeed,
    policy: RngPolicy,
}

impl std::fmt::Debug for UtilityObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UtilityObjective")
            .field("simulator", &self.simulator.name())
            .field("prior", &self.prior)
            .field("bank_size", &self.bank.len())
            .field("lfire", &self.lfire)
            .field("seed", &self.seed)
            .field("policy", &self.policy)
            .finish()
    }
}

impl UtilityObjective {
    /// Draws a bank of `bank_size` prior samples from the seed's bank stream.
    pub fn new(
        simulator: Arc<dyn Simulator>,
        prior: PriorSpec,
        bank_size: usize,
        lfire: LfireConfig,
        seed: RngSeed,
        policy: RngPolicy,
    ) -> Result<Self> {
        let bank = sample_prior(&prior, bank_size, &mut seed.stream(&[tags::PRIOR_BANK]))?;
        Self::with_bank(simulator, prior, bank, lfire, seed, policy)
    }

    pub fn with_bank(
        simulator: Arc<dyn Simulator>,
        prior: PriorSpec,
        bank: Vec<ParameterDraw>,
        lfire: LfireConfig,
        seed: RngSeed,
        policy: RngPolicy,
    ) -> Result<Self> {
        prior.validate()?;
        lfire.validate()?;
        if bank.is_empty() {
            return Err(invalid("prior bank is empty"));
        }
        if prior.param_dim() != simulator.param_dim() || bank.iter().any(|t| t.theta.len() != prior.param_dim()) {
            return Err(invalid("prior, bank and simulator parameter dimensions differ"));
        }
        Ok(Self { simulator, prior, bank, lfire, seed, policy })
    }

    pub fn simulator(&self) -> &dyn Simulator {
        self.simulator.as_ref()
    }

    pub fn simulator_arc(&self) -> Arc<dyn Simulator> {
        Arc::clone(&self.simulator)
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn bank(&self) -> &[ParameterDraw] {
        &self.bank
    }

    pub fn lfire(&self) -> &LfireConfig {
        &self.lfire
    }

    pub fn seed(&self) -> RngSeed {
        self.seed
    }

    pub fn policy(&self) -> RngPolicy {
        self.policy
    }

    /// Stream seed for the `index`-th evaluation under the objective's policy.
    pub fn evaluation_seed(&self, index: u64) -> RngSeed {
        match self.policy {
            RngPolicy::Common => self.seed.derive(&[tags::EVALUATION]),
            RngPolicy::Fresh => self.seed.derive(&[tags::EVALUATION, index]),
        }
    }

    /// A seed no policy hands out, for retrying a failed evaluation.
    pub fn retry_seed(&self, index: u64, attempt: u64) -> RngSeed {
        self.seed.derive(&[tags::EVALUATION, u64::MAX - attempt, index])
    }

    /// Seed for try `attempt` of evaluation `index`; try 0 follows the policy.
    pub fn attempt_seed(&self, index: u64, attempt: u64) -> RngSeed {
        if attempt == 0 {
            self.evaluation_seed(index)
        } else {
            self.retry_seed(index, attempt)
        }
    }

    /// SHA-256 over the bit patterns of the bank.
    pub fn bank_fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for draw in &self.bank {
            for t in &draw.theta {
                hasher.update(t.to_bits().to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn feature_kind(&self, design_dim: usize) -> FeatureKind {
        self.lfire.feature_kind(self.simulator.data_dim(design_dim))
    }
}

/// Utility estimate at `design`.
pub fn estimate_mi(objective: &UtilityObjective, design: &DesignPoint, seed: RngSeed) -> Result<UtilityEstimate> {
    run_estimate(objective, design, seed, &Lfire, false).map(|(e, _)| e)
}

/// Utility estimate at `design`, also returning the fitted ratio model of every bank draw.
pub fn estimate_mi_with_models(
    objective: &UtilityObjective,
    design: &DesignPoint,
    seed: RngSeed,
) -> Result<(UtilityEstimate, Vec<RatioModel>)> {
    run_estimate(objective, design, seed, &Lfire, true)
}

/// Utility estimate with a caller-supplied ratio estimator.
pub fn estimate_mi_with(
    objective: &UtilityObjective,
    design: &DesignPoint,
    seed: RngSeed,
    estimator: &dyn RatioEstimator,
) -> Result<(UtilityEstimate, Vec<RatioModel>)> {
    run_estimate(objective, design, seed, estimator, true)
}

fn run_estimate(
    objective: &UtilityObjective,
    design: &DesignPoint,
    seed: RngSeed,
    estimator: &dyn RatioEstimator,
    keep_models: bool,
) -> Result<(UtilityEstimate, Vec<RatioModel>)> {
    let sim = objective.simulator();
    let cfg = &objective.lfire;
    let marginal = sample_marginal(
        design,
        &objective.prior,
        sim,
        cfg.samples_per_class,
        &mut seed.stream(&[tags::MARGINAL]),
    )?;
    let per_sample: Vec<(f64, bool, Option<RatioModel>)> = objective
        .bank
        .par_iter()
        .enumerate()
        .map(|(i, draw)| {
            let mut rng = seed.stream(&[tags::PER_SAMPLE, i as u64]);
            let y = sim.simulate(&draw.theta, design, &mut rng)?;
            let model = estimator.fit(design, &draw.theta, sim, &marginal, cfg, &mut rng)?;
            let lr = model.log_ratio(&y)?;
            Ok((lr, model.converged, keep_models.then_some(model)))
        })
        .collect::<Result<_>>()?;
    let raw: Vec<f64> = per_sample.iter().map(|p| p.0).collect();
    let unconverged = per_sample.iter().filter(|p| !p.1).count();
    let estimate = UtilityEstimate::from_log_ratios(design.clone(), &raw, cfg.clip, unconverged)?;
    let models = per_sample.into_iter().filter_map(|p| p.2).collect();
    Ok((estimate, models))
}

/// Estimates at every grid point. Failures are kept per point; the sweep continues.
pub fn evaluate_on_grid(
    objective: &UtilityObjective,
    grid: &[DesignPoint],
    estimator: Estimator,
) -> Result<Vec<Result<UtilityEstimate>>> {
    if grid.is_empty() {
        return Err(invalid("grid is empty"));
    }
    if let Estimator::Analytic { .. } = estimator {
        if objective.simulator().death_config().is_none() {
            return Err(Error::Unsupported("the analytic estimator requires the Death model".into()));
        }
    }
    Ok(grid
        .iter()
        .enumerate()
        .map(|(k, d)| evaluate(objective, d, estimator, objective.evaluation_seed(k as u64)))
        .collect())
}

/// One estimate with the given estimator.
pub fn evaluate(objective: &UtilityObjective, design: &DesignPoint, estimator: Estimator, seed: RngSeed) -> Result<UtilityEstimate> {
    match estimator {
        Estimator::Lfire => estimate_mi(objective, design, seed),
        Estimator::Analytic { nodes, upper } => {
            let cfg = objective
                .simulator()
                .death_config()
                .ok_or_else(|| Error::Unsupported("the analytic estimator requires the Death model".into()))?;
            analytic_mi_death(
                objective.bank(),
                objective.prior(),
                design,
                cfg,
                &QuadratureConfig { nodes, upper },
                seed,
            )
        }
    }
}
