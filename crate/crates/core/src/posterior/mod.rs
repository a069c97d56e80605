//! Posterior inference at a chosen design: ratio weights on the prior bank,
//! multinomial resampling, Gaussian KDE and summaries, plus the exact Death
//! posterior on a grid.

mod exact;
mod kde;

pub use exact::{exact_death_posterior, GridDensity, EXACT_GRID_POINTS, EXACT_GRID_UPPER};
pub use kde::{kde_fit, KdeDensity};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::design::DesignPoint;
use crate::error::{invalid, Error, Result};
use crate::lfire::{clip_log_ratio, RatioModel};
use crate::prior::ParameterDraw;
use crate::rng::StreamRng;

pub const DEFAULT_POSTERIOR_SAMPLES: usize = 10_000;

/// Prior bank with normalised importance weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPrior {
    pub draws: Vec<ParameterDraw>,
    /// Log weights after clipping.
    pub log_weights: Vec<f64>,
    pub weights: Vec<f64>,
    pub ess: f64,
}

impl WeightedPrior {
    /// Normalises `exp(log_weights)`; fails when no weight is positive and finite.
    pub fn from_log_weights(draws: Vec<ParameterDraw>, log_weights: Vec<f64>) -> Result<Self> {
        if draws.is_empty() || draws.len() != log_weights.len() {
            return Err(invalid("weights and draws must be non-empty and of equal length"));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::DegenerateWeights("weights contain NaN or infinity".into()));
        }
        let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return Err(Error::DegenerateWeights("every weight is zero".into()));
        }
        let raw: Vec<f64> = log_weights.iter().map(|w| (w - m).exp()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        Ok(Self { draws, log_weights, weights, ess })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Weights `exp(clip(log r_i(y*)))` from one ratio model per bank draw.
pub fn compute_weights(models: &[RatioModel], observation: &[f64], bank: &[ParameterDraw], clip: f64) -> Result<WeightedPrior> {
    if models.len() != bank.len() {
        return Err(invalid(format!("{} ratio models for {} prior draws", models.len(), bank.len())));
    }
    let log_weights = models
        .iter()
        .map(|m| m.log_ratio(observation).map(|lr| clip_log_ratio(lr, clip).0))
        .collect::<Result<Vec<_>>>()?;
    if log_weights.iter().all(|w| w.exp() == 0.0) {
        return Err(Error::DegenerateWeights("every weight underflows after clipping".into()));
    }
    WeightedPrior::from_log_weights(bank.to_vec(), log_weights)
}

/// Resampled parameter draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub draws: Vec<Vec<f64>>,
    /// Bank index of every draw.
    pub indices: Vec<usize>,
    pub design: Option<DesignPoint>,
    pub observation: Option<Vec<f64>>,
}

impl PosteriorSamples {
    pub fn from_draws(draws: Vec<Vec<f64>>) -> Self {
        let indices = (0..draws.len()).collect();
        Self { draws, indices, design: None, observation: None }
    }

    pub fn dim(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }
}

/// `count` categorical draws with replacement.
pub fn resample(wp: &WeightedPrior, count: usize, rng: &mut StreamRng) -> Result<PosteriorSamples> {
    if count == 0 {
        return Err(invalid("resample count must be positive"));
    }
    let dist = WeightedIndex::new(&wp.weights).map_err(|e| Error::DegenerateWeights(e.to_string()))?;
    let indices: Vec<usize> = (0..count).map(|_| dist.sample(rng)).collect();
    let draws = indices.iter().map(|&i| wp.draws[i].theta.clone()).collect();
    Ok(PosteriorSamples { draws, indices, design: None, observation: None })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize_values(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(invalid("cannot summarise an empty sample"));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let sd = if s.len() > 1 {
        (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(Summary {
        median: quantile_sorted(&s, 0.5),
        lower: quantile_sorted(&s, 0.025),
        upper: quantile_sorted(&s, 0.975),
        mean,
        sd,
    })
}

/// Median, central 95% interval, mean and standard deviation per dimension.
pub fn summarize(samples: &PosteriorSamples) -> Result<Vec<Summary>> {
    if samples.is_empty() {
        return Err(invalid("cannot summarise an empty sample"));
    }
    (0..samples.dim()).map(|j| summarize_values(&samples.column(j))).collect()
}

/// Pointwise mean and standard deviation of densities on a common grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityBand {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl DensityBand {
    pub fn from_replicates(grid: &[f64], densities: &[Vec<f64>]) -> Result<Self> {
        if densities.is_empty() || densities.iter().any(|d| d.len() != grid.len()) {
            return Err(invalid("replicate densities must be non-empty and match the grid"));
        }
        let r = densities.len() as f64;
        let mean: Vec<f64> = (0..grid.len()).map(|k| densities.iter().map(|d| d[k]).sum::<f64>() / r).collect();
        let sd = (0..grid.len())
            .map(|k| {
                if densities.len() < 2 {
                    return 0.0;
                }
                (densities.iter().map(|d| (d[k] - mean[k]).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
            })
            .collect();
        Ok(Self { grid: grid.to_vec(), mean, sd })
    }

    pub fn mean_density(&self) -> GridDensity {
        GridDensity { grid: self.grid.clone(), density: self.mean.clone() }
    }
}

/// Half the L1 distance between two probability vectors.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "probability vectors differ in length");
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
