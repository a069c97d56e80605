//! Design selection followed by posterior inference on simulated observations.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use implicit_bed::bayesopt::{optimize_utility_bo, optimize_utility_grid, BoSettings, BoTrace};
use implicit_bed::lfire::RatioModel;
use implicit_bed::posterior::{
    compute_weights, exact_death_posterior, kde_fit, resample, summarize, DensityBand, PosteriorSamples,
    Summary, WeightedPrior,
};
use implicit_bed::rng::tags;
use implicit_bed::simulators::{death_log_likelihood, DeathModel, SirModel, Simulator};
use implicit_bed::utility::{evaluate, estimate_mi_with_models, UtilityObjective};
use implicit_bed::{DesignPoint, DesignSpace, ParameterDraw, RngSeed, StreamRng};

use crate::config::{EstimatorKind, ExperimentConfig, Method, ModelKind};
use crate::error::CliResult;

pub fn parameter_names(model: ModelKind) -> Vec<&'static str> {
    match model {
        ModelKind::Death => vec!["b"],
        ModelKind::Sir => vec!["beta", "gamma"],
    }
}

pub fn build_simulator(cfg: &ExperimentConfig) -> CliResult<Arc<dyn Simulator>> {
    Ok(match cfg.model {
        ModelKind::Death => Arc::new(DeathModel::new(cfg.death_config())?),
        ModelKind::Sir => Arc::new(SirModel::new(cfg.sir_config())?),
    })
}

pub fn build_objective(cfg: &ExperimentConfig) -> CliResult<UtilityObjective> {
    Ok(UtilityObjective::new(
        build_simulator(cfg)?,
        cfg.prior_spec(),
        cfg.prior_samples,
        cfg.lfire_config(),
        RngSeed(cfg.seed),
        cfg.rng_policy,
    )?)
}

/// One evaluated design, as written to the utility curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub design: DesignPoint,
    pub value: Option<f64>,
    pub std_error: Option<f64>,
    pub clip_count: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSelection {
    pub method: Method,
    pub design: DesignPoint,
    pub value: f64,
    pub std_error: f64,
    /// Seed of the evaluation that produced `value`.
    pub evaluation_seed: RngSeed,
    pub curve: Vec<CurvePoint>,
    pub trace: Option<BoTrace>,
}

pub fn bo_settings(cfg: &ExperimentConfig) -> BoSettings {
    let mut s = BoSettings::new(cfg.budget, cfg.dims);
    if let Some(init) = cfg.init_count {
        s.init_count = init;
    }
    s
}

/// Uniform times in `(lower, upper]`, sorted; redrawn on ties.
pub fn random_design(space: &DesignSpace, rng: &mut StreamRng) -> CliResult<DesignPoint> {
    loop {
        let mut t: Vec<f64> = (0..space.dim)
            .map(|_| space.upper - space.range() * rng.random::<f64>())
            .collect();
        t.sort_by(f64::total_cmp);
        if let Ok(d) = DesignPoint::new(t) {
            return Ok(d);
        }
    }
}

fn single_point(
    cfg: &ExperimentConfig,
    objective: &UtilityObjective,
    method: Method,
    design: DesignPoint,
) -> CliResult<DesignSelection> {
    let seed = objective.evaluation_seed(0);
    let e = evaluate(objective, &design, cfg.estimator_choice(), seed)?;
    Ok(DesignSelection {
        method,
        design: design.clone(),
        value: e.value,
        std_error: e.std_error,
        evaluation_seed: seed,
        curve: vec![CurvePoint {
            design,
            value: Some(e.value),
            std_error: Some(e.std_error),
            clip_count: Some(e.clip_count),
            error: None,
        }],
        trace: None,
    })
}

pub fn select_design(cfg: &ExperimentConfig, objective: &UtilityObjective) -> CliResult<DesignSelection> {
    let space = cfg.space();
    let estimator = cfg.estimator_choice();
    match cfg.method {
        Method::Grid => {
            let g = optimize_utility_grid(objective, &space, estimator)?;
            let best = g.best().clone();
            let curve = g
                .designs
                .iter()
                .zip(&g.curve)
                .map(|(d, r)| match r {
                    Ok(e) => CurvePoint {
                        design: d.clone(),
                        value: Some(e.value),
                        std_error: Some(e.std_error),
                        clip_count: Some(e.clip_count),
                        error: None,
                    },
                    Err(err) => CurvePoint {
                        design: d.clone(),
                        value: None,
                        std_error: None,
                        clip_count: None,
                        error: Some(err.to_string()),
                    },
                })
                .collect();
            Ok(DesignSelection {
                method: Method::Grid,
                design: g.best_design().clone(),
                value: best.value,
                std_error: best.std_error,
                evaluation_seed: objective.evaluation_seed(g.best_index as u64),
                curve,
                trace: None,
            })
        }
        Method::Bo => {
            let trace = optimize_utility_bo(objective, &space, &bo_settings(cfg), estimator, RngSeed(cfg.seed).derive(&[tags::BO]))?;
            let inc = trace.incumbent().clone();
            let curve = trace
                .points
                .iter()
                .map(|p| CurvePoint {
                    design: p.design.clone(),
                    value: Some(p.value),
                    std_error: Some(p.std_error),
                    clip_count: None,
                    error: None,
                })
                .collect();
            Ok(DesignSelection {
                method: Method::Bo,
                design: inc.design,
                value: inc.value,
                std_error: inc.std_error,
                evaluation_seed: objective.attempt_seed(inc.iteration as u64, inc.attempt),
                curve,
                trace: Some(trace),
            })
        }
        Method::Random => {
            let d = random_design(&space, &mut RngSeed(cfg.seed).stream(&[tags::BASELINE, 0]))?;
            single_point(cfg, objective, Method::Random, d)
        }
        Method::Equidistant => single_point(cfg, objective, Method::Equidistant, space.equidistant()),
    }
}

/// Where posterior weights come from.
pub enum WeightSource {
    Ratios(Vec<RatioModel>),
    /// Exact Death likelihood.
    Exact,
}

impl WeightSource {
    /// Ratio models refitted at `design` with `seed`, or the exact likelihood
    /// when the analytic estimator is configured.
    pub fn at(cfg: &ExperimentConfig, objective: &UtilityObjective, design: &DesignPoint, seed: RngSeed) -> CliResult<Self> {
        Ok(match cfg.estimator {
            EstimatorKind::Analytic => WeightSource::Exact,
            EstimatorKind::Lfire => WeightSource::Ratios(estimate_mi_with_models(objective, design, seed)?.1),
        })
    }

    fn weights(&self, cfg: &ExperimentConfig, bank: &[ParameterDraw], design: &DesignPoint, y: &[f64]) -> CliResult<WeightedPrior> {
        match self {
            WeightSource::Ratios(models) => Ok(compute_weights(models, y, bank, cfg.clip)?),
            WeightSource::Exact => {
                let counts = to_counts(y);
                let dc = cfg.death_config();
                let lw = bank.iter().map(|t| death_log_likelihood(t.theta[0], design, &counts, &dc)).collect();
                Ok(WeightedPrior::from_log_weights(bank.to_vec(), lw)?)
            }
        }
    }
}

fn to_counts(y: &[f64]) -> Vec<u32> {
    y.iter().map(|v| *v as u32).collect()
}

/// Evaluation grid for each parameter's density.
pub fn density_grids(cfg: &ExperimentConfig) -> Vec<Vec<f64>> {
    let p = cfg.density_grid_points;
    cfg.prior_spec()
        .support()
        .into_iter()
        .map(|(lo, hi)| {
            if hi.is_finite() {
                (0..p).map(|k| lo + (hi - lo) * k as f64 / (p - 1) as f64).collect()
            } else {
                let top = lo.max(0.0) + cfg.quadrature_upper;
                (1..=p).map(|k| lo + (top - lo) * k as f64 / p as f64).collect()
            }
        })
        .collect()
}

fn kde_ranges(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.prior_spec()
        .support()
        .into_iter()
        .map(|(lo, hi)| {
            let w = if hi.is_finite() { hi - lo } else { cfg.quadrature_upper };
            if w > 0.0 { w } else { 1.0 }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactSummary {
    pub summary: Summary,
    pub density: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub design: DesignPoint,
    pub observation: Vec<f64>,
    pub ess: f64,
    pub samples: PosteriorSamples,
    pub summary: Vec<Summary>,
    /// Marginal density of each parameter on its grid.
    pub densities: Vec<Vec<f64>>,
    /// Exact posterior for Death runs.
    pub exact: Option<ExactSummary>,
}

fn exact_summary(cfg: &ExperimentConfig, design: &DesignPoint, y: &[f64], grid: &[f64]) -> CliResult<ExactSummary> {
    let post = exact_death_posterior(&to_counts(y), design, &cfg.prior_spec(), &cfg.death_config(), grid)?;
    let summary = Summary {
        median: post.quantile(0.5),
        lower: post.quantile(0.025),
        upper: post.quantile(0.975),
        mean: post.mean(),
        sd: post.sd(),
    };
    Ok(ExactSummary { summary, density: post.density })
}

/// Observation at the true parameters, weighting, resampling, KDE and summaries.
pub fn posterior_replicate(
    cfg: &ExperimentConfig,
    objective: &UtilityObjective,
    source: &WeightSource,
    design: &DesignPoint,
    index: usize,
    observation_seed: RngSeed,
) -> CliResult<ReplicateOutcome> {
    let truth = cfg.truth_params();
    let y = objective
        .simulator()
        .simulate(&truth, design, &mut observation_seed.stream(&[tags::OBSERVATION, index as u64]))?;
    let wp = source.weights(cfg, objective.bank(), design, &y)?;
    let mut samples = resample(&wp, cfg.posterior_samples, &mut observation_seed.stream(&[tags::RESAMPLE, index as u64]))?;
    samples.design = Some(design.clone());
    samples.observation = Some(y.clone());
    let summary = summarize(&samples)?;
    let grids = density_grids(cfg);
    let exact = match cfg.model {
        ModelKind::Death => Some(exact_summary(cfg, design, &y, &grids[0])?),
        ModelKind::Sir => None,
    };
    let densities = match (source, &exact) {
        (WeightSource::Exact, Some(ex)) => vec![ex.density.clone()],
        _ => {
            let kde = kde_fit(&samples, &kde_ranges(cfg))?;
            grids
                .iter()
                .enumerate()
                .map(|(j, g)| g.iter().map(|&x| kde.marginal_density(j, x)).collect())
                .collect()
        }
    };
    Ok(ReplicateOutcome { index, design: design.clone(), observation: y, ess: wp.ess, samples, summary, densities, exact })
}

/// Averages of per-replicate summaries and quantiles of the averaged density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterAggregate {
    pub parameter: String,
    pub mean_median: f64,
    pub mean_lower: f64,
    pub mean_upper: f64,
    pub mean_sd: f64,
    pub sd_of_medians: f64,
    pub averaged_density_median: f64,
    pub averaged_density_lower: f64,
    pub averaged_density_upper: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn aggregate(name: &str, summaries: &[Summary], band: &DensityBand) -> ParameterAggregate {
    let col = |f: fn(&Summary) -> f64| summaries.iter().map(f).collect::<Vec<_>>();
    let medians = col(|s| s.median);
    let avg = band.mean_density();
    ParameterAggregate {
        parameter: name.to_string(),
        mean_median: mean(&medians),
        mean_lower: mean(&col(|s| s.lower)),
        mean_upper: mean(&col(|s| s.upper)),
        mean_sd: mean(&col(|s| s.sd)),
        sd_of_medians: sample_sd(&medians),
        averaged_density_median: avg.quantile(0.5),
        averaged_density_lower: avg.quantile(0.025),
        averaged_density_upper: avg.quantile(0.975),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub requested: usize,
    pub succeeded: usize,
    pub failures: Vec<ReplicateFailure>,
    /// Posterior from the configured weights (ratio or exact).
    pub posterior: Vec<ParameterAggregate>,
    /// Exact grid posterior, Death only.
    pub exact: Option<Vec<ParameterAggregate>>,
    pub mean_ess: f64,
}

pub struct PosteriorRun {
    pub report: PosteriorReport,
    pub replicates: Vec<ReplicateOutcome>,
    pub bands: Vec<DensityBand>,
    pub exact_band: Option<DensityBand>,
}

/// Runs `cfg.replicates` independent observation/posterior pipelines at `design`.
pub fn run_posterior(
    cfg: &ExperimentConfig,
    objective: &UtilityObjective,
    source: &WeightSource,
    design: &DesignPoint,
) -> CliResult<PosteriorRun> {
    let seed = RngSeed(cfg.seed);
    let results: Vec<CliResult<ReplicateOutcome>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| posterior_replicate(cfg, objective, source, design, r, seed))
        .collect();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => replicates.push(o),
            Err(e) => failures.push(ReplicateFailure { index: r, error: e.to_string() }),
        }
    }
    let names = parameter_names(cfg.model);
    let grids = density_grids(cfg);
    let mut bands = Vec::new();
    let mut posterior = Vec::new();
    let mut exact = None;
    let mut exact_band = None;
    if !replicates.is_empty() {
        for (j, name) in names.iter().enumerate() {
            let dens: Vec<Vec<f64>> = replicates.iter().map(|o| o.densities[j].clone()).collect();
            let band = DensityBand::from_replicates(&grids[j], &dens)?;
            let sums: Vec<Summary> = replicates.iter().map(|o| o.summary[j]).collect();
            posterior.push(aggregate(name, &sums, &band));
            bands.push(band);
        }
        if cfg.model == ModelKind::Death {
            let dens: Vec<Vec<f64>> = replicates.iter().filter_map(|o| o.exact.as_ref().map(|e| e.density.clone())).collect();
            let sums: Vec<Summary> = replicates.iter().filter_map(|o| o.exact.as_ref().map(|e| e.summary)).collect();
            let band = DensityBand::from_replicates(&grids[0], &dens)?;
            exact = Some(vec![aggregate(names[0], &sums, &band)]);
            exact_band = Some(band);
        }
    }
    let mean_ess = if replicates.is_empty() { 0.0 } else { mean(&replicates.iter().map(|o| o.ess).collect::<Vec<_>>()) };
    Ok(PosteriorRun {
        report: PosteriorReport {
            requested: cfg.replicates,
            succeeded: replicates.len(),
            failures,
            posterior,
            exact,
            mean_ess,
        },
        replicates,
        bands,
        exact_band,
    })
}
