//! Design optimisation: grid search in one dimension and GP-based Bayesian
//! optimisation with Expected Improvement in any dimension.

mod acquisition;
mod gp;
pub mod lowdisc;
mod transform;

pub use acquisition::{ei_at, expected_improvement, propose_next, AcquisitionSettings, Proposal, DEFAULT_XI};
pub use gp::{log_marginal_likelihood, GpFitSettings, GpHyperparameters, GpSurrogate, MAX_JITTER};
pub use transform::{OrderedTransform, MARGIN};

use serde::{Deserialize, Serialize};

use crate::design::{make_grid, DesignPoint, DesignSpace};
use crate::error::{invalid, Error, Result};
use crate::rng::{tags, RngSeed};
use crate::utility::{evaluate, evaluate_on_grid, Estimator, UtilityEstimate, UtilityObjective};

/// Number of space-filling designs evaluated before the surrogate takes over.
pub fn default_init_count(dim: usize) -> usize {
    5.max(dim + 2)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncumbentRule {
    /// Highest observed (noisy) utility.
    #[default]
    BestObserved,
    /// Observed design with the highest surrogate mean after the last evaluation.
    PosteriorMean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoSettings {
    pub budget: usize,
    pub init_count: usize,
    pub gp: GpFitSettings,
    pub acquisition: AcquisitionSettings,
    pub incumbent: IncumbentRule,
}

impl BoSettings {
    pub fn new(budget: usize, dim: usize) -> Self {
        Self {
            budget,
            init_count: default_init_count(dim).min(budget),
            gp: GpFitSettings::default(),
            acquisition: AcquisitionSettings::default(),
            incumbent: IncumbentRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.init_count < 2 || self.budget < self.init_count {
            return Err(invalid(format!(
                "BO needs budget >= init_count >= 2, got budget {} and init_count {}",
                self.budget, self.init_count
            )));
        }
        Ok(())
    }
}

/// Value and standard error of one objective evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub value: f64,
    pub std_error: f64,
}

impl From<&UtilityEstimate> for Observation {
    fn from(e: &UtilityEstimate) -> Self {
        Self { value: e.value, std_error: e.std_error }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoPoint {
    /// Zero-based evaluation index, counting failures.
    pub iteration: usize,
    pub design: DesignPoint,
    pub value: f64,
    pub std_error: f64,
    pub cumulative_best: f64,
    /// 0 for the first try, 1 for the retry.
    pub attempt: u64,
    pub exploratory: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoFailure {
    pub iteration: usize,
    pub design: DesignPoint,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    pub points: Vec<BoPoint>,
    pub failures: Vec<BoFailure>,
    pub init_count: usize,
    /// Index into `points`.
    pub incumbent_index: usize,
}

impl BoTrace {
    pub fn incumbent(&self) -> &BoPoint {
        &self.points[self.incumbent_index]
    }

    pub fn cumulative_best(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.cumulative_best).collect()
    }

    /// Cumulative best after the first `evaluations` successful evaluations.
    pub fn best_after(&self, evaluations: usize) -> Option<f64> {
        evaluations.checked_sub(1).and_then(|i| self.points.get(i)).map(|p| p.cumulative_best)
    }
}

/// Generic BO loop. `f(design, iteration, attempt)` evaluates the objective;
/// a failure is retried once with `attempt = 1` and then recorded and skipped.
pub fn optimize_bo<F>(space: &DesignSpace, settings: &BoSettings, seed: RngSeed, mut f: F) -> Result<BoTrace>
where
    F: FnMut(&DesignPoint, usize, u64) -> Result<Observation>,
{
    settings.validate()?;
    let transform = OrderedTransform::new(space)?;
    let dim = space.dim;
    if dim > lowdisc::MAX_DIM {
        return Err(Error::Unsupported(format!("BO is limited to {} dimensions", lowdisc::MAX_DIM)));
    }
    let shift = lowdisc::random_shift(dim, &mut seed.stream(&[tags::BO, 0]));
    let initial = lowdisc::shifted_halton(settings.init_count, dim, &shift);

    let mut units: Vec<Vec<f64>> = Vec::new();
    let mut points: Vec<BoPoint> = Vec::new();
    let mut failures = Vec::new();
    let mut best = f64::NEG_INFINITY;

    for k in 0..settings.budget {
        let mut rng = seed.stream(&[tags::BO, 1, k as u64]);
        let (unit, exploratory) = if k < settings.init_count || units.len() < 2 {
            let u = if k < settings.init_count {
                initial[k].clone()
            } else {
                (0..dim).map(|_| rand::Rng::random::<f64>(&mut rng)).collect()
            };
            (u, false)
        } else {
            let values: Vec<f64> = points.iter().map(|p| p.value).collect();
            let gp = GpSurrogate::fit(&units, &values, &settings.gp, &mut rng)?;
            let p = propose_next(&gp, &transform, best, &settings.acquisition, &mut rng)?;
            (p.unit, p.exploratory)
        };
        let design = transform.to_design(&unit)?;
        let mut outcome = f(&design, k, 0).map(|o| (o, 0));
        if outcome.is_err() {
            outcome = f(&design, k, 1).map(|o| (o, 1));
        }
        match outcome {
            Ok((obs, attempt)) if obs.value.is_finite() => {
                best = best.max(obs.value);
                units.push(unit);
                points.push(BoPoint {
                    iteration: k,
                    design,
                    value: obs.value,
                    std_error: obs.std_error,
                    cumulative_best: best,
                    attempt,
                    exploratory,
                });
            }
            Ok(_) => failures.push(BoFailure { iteration: k, design, error: "non-finite utility".into() }),
            Err(e) => failures.push(BoFailure { iteration: k, design, error: e.to_string() }),
        }
    }
    if points.is_empty() {
        return Err(Error::Simulation("every BO evaluation failed".into()));
    }
    let incumbent_index = match settings.incumbent {
        IncumbentRule::BestObserved => argmax_first(points.iter().map(|p| p.value)),
        IncumbentRule::PosteriorMean if points.len() >= 2 => {
            let values: Vec<f64> = points.iter().map(|p| p.value).collect();
            let gp = GpSurrogate::fit(&units, &values, &settings.gp, &mut seed.stream(&[tags::BO, 2]))?;
            argmax_first(units.iter().map(|u| gp.predict(u).0))
        }
        IncumbentRule::PosteriorMean => 0,
    };
    Ok(BoTrace { points, failures, init_count: settings.init_count, incumbent_index })
}

/// Index of the first maximum.
fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// BO over the utility; evaluation `k` uses the objective's stream for `k`.
pub fn optimize_utility_bo(
    objective: &UtilityObjective,
    space: &DesignSpace,
    settings: &BoSettings,
    estimator: Estimator,
    seed: RngSeed,
) -> Result<BoTrace> {
    optimize_bo(space, settings, seed, |design, k, attempt| {
        let s = objective.attempt_seed(k as u64, attempt);
        evaluate(objective, design, estimator, s).map(|e| Observation::from(&e))
    })
}

#[derive(Clone, Debug)]
pub struct GridResult {
    pub designs: Vec<DesignPoint>,
    pub curve: Vec<Result<UtilityEstimate>>,
    pub best_index: usize,
}

impl GridResult {
    pub fn best(&self) -> &UtilityEstimate {
        self.curve[self.best_index].as_ref().expect("best grid point has an estimate")
    }

    pub fn best_design(&self) -> &DesignPoint {
        &self.designs[self.best_index]
    }

    /// `(τ, value)` for every successful grid point.
    pub fn values(&self) -> Vec<(f64, f64)> {
        self.designs
            .iter()
            .zip(&self.curve)
            .filter_map(|(d, r)| r.as_ref().ok().map(|e| (d.times()[0], e.value)))
            .collect()
    }
}

/// Exhaustive search over the one-dimensional grid; ties go to the smaller time.
pub fn optimize_utility_grid(objective: &UtilityObjective, space: &DesignSpace, estimator: Estimator) -> Result<GridResult> {
    let designs = make_grid(space)?;
    let curve = evaluate_on_grid(objective, &designs, estimator)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in curve.iter().enumerate() {
        if let Ok(e) = r {
            if best.is_none_or(|b| e.value > b.1) {
                best = Some((i, e.value));
            }
        }
    }
    let (best_index, _) = best.ok_or_else(|| Error::Simulation("every grid evaluation failed".into()))?;
    Ok(GridResult { designs, curve, best_index })
}
