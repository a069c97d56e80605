//! Density-ratio estimation by logistic regression.
//!
//! Data simulated at a fixed parameter (positive class) is classified against
//! data simulated from the marginal (negative class). With equal class sizes
//! the fitted log-odds estimate `log p(y | θ, d) - log p(y | d)`; with unequal
//! sizes the prior log-odds `log(M_pos / M_neg)` is subtracted.

mod features;
mod logistic;

pub use features::{FeatureKind, FeatureMap};
pub use logistic::{fit_newton, mean_log_loss, CountData, NewtonFit, NewtonSettings};

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::DesignPoint;
use crate::error::{invalid, Result};
use crate::prior::PriorSpec;
use crate::rng::StreamRng;
use crate::simulators::Simulator;

/// Default number of samples per class.
pub const DEFAULT_SAMPLES_PER_CLASS: usize = 1000;

/// Log-ratios are clipped to `[-clip, clip]` before they enter any average.
pub const DEFAULT_CLIP: f64 = 30.0;

/// Largest input dimension for which `auto` features use the full quadratic map.
pub const AUTO_POLY2_MAX_DIM: usize = 3;

/// Row-major matrix of data vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * rows) }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Self {
        let mut set = Self::with_capacity(dim, rows.len());
        for r in rows {
            set.push(r);
        }
        set
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(invalid("flat sample data does not match the row dimension"));
        }
        Ok(Self { dim, data })
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.dim, "row dimension mismatch");
        self.data.extend_from_slice(row);
    }

    /// Appends a zeroed row and returns it for in-place filling.
    pub fn push_zeroed(&mut self) -> &mut [f64] {
        let start = self.data.len();
        self.data.resize(start + self.dim, 0.0);
        &mut self.data[start..]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

/// Data simulated from the marginal `p(y | d)` at one design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalDataset {
    pub design: DesignPoint,
    pub samples: SampleSet,
}

impl MarginalDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularization {
    /// `λ = 1 / M_pos`.
    InverseSampleSize,
    Fixed { penalty: f64 },
    /// k-fold cross-validated choice of `λ` from `grid` by held-out log-loss.
    CrossValidated { folds: usize, grid: Vec<f64> },
}

impl Regularization {
    /// Log-spaced grid `10^-4 … 10^0` with 5-fold cross-validation.
    pub fn cross_validated() -> Self {
        Regularization::CrossValidated {
            folds: 5,
            grid: (0..9).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfireConfig {
    pub samples_per_class: usize,
    /// `None` picks [`FeatureKind::Poly2`] up to [`AUTO_POLY2_MAX_DIM`] inputs
    /// and [`FeatureKind::Poly2Diagonal`] above.
    pub features: Option<FeatureKind>,
    pub regularization: Regularization,
    pub tol: f64,
    pub max_iter: usize,
    pub clip: f64,
}

impl Default for LfireConfig {
    fn default() -> Self {
        Self {
            samples_per_class: DEFAULT_SAMPLES_PER_CLASS,
            features: None,
            regularization: Regularization::InverseSampleSize,
            tol: 1e-8,
            max_iter: 200,
            clip: DEFAULT_CLIP,
        }
    }
}

impl LfireConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_class < 2 {
            return Err(invalid("at least two samples per class are required"));
        }
        if !(self.clip > 0.0) {
            return Err(invalid("log-ratio clip must be positive"));
        }
        match &self.regularization {
            Regularization::Fixed { penalty } if !(*penalty > 0.0 && penalty.is_finite()) => {
                Err(invalid(format!("penalty {penalty} must be positive")))
            }
            Regularization::CrossValidated { folds, grid }
                if *folds < 2 || grid.is_empty() || grid.iter().any(|l| !(*l > 0.0)) =>
            {
                Err(invalid("cross-validation needs ≥ 2 folds and a positive penalty grid"))
            }
            _ => Ok(()),
        }
    }

    pub fn feature_kind(&self, input_dim: usize) -> FeatureKind {
        self.features.unwrap_or(if input_dim <= AUTO_POLY2_MAX_DIM {
            FeatureKind::Poly2
        } else {
            FeatureKind::Poly2Diagonal
        })
    }
}

/// Fitted log-ratio `log r(y) = intercept + coefficients · φ(y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub feature_map: FeatureMap,
    pub penalty: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl RatioModel {
    /// The ratio that is identically one.
    pub fn identity(kind: FeatureKind, input_dim: usize) -> Self {
        let feature_map = FeatureMap::identity(kind, input_dim);
        Self {
            intercept: 0.0,
            coefficients: vec![0.0; feature_map.output_dim()],
            feature_map,
            penalty: 0.0,
            converged: true,
            iterations: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.feature_map.input_dim
    }

    pub fn log_ratio(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.feature_map.input_dim {
            return Err(invalid(format!(
                "data dimension {} does not match ratio model input dimension {}",
                y.len(),
                self.feature_map.input_dim
            )));
        }
        let features = self.feature_map.transform(y);
        Ok(self.intercept + self.coefficients.iter().zip(&features).map(|(c, f)| c * f).sum::<f64>())
    }

    pub fn coefficient_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Clips a log-ratio to `[-clip, clip]`, reporting whether it was clipped.
/// Non-finite values clip to the nearest bound (NaN to `-clip`).
pub fn clip_log_ratio(value: f64, clip: f64) -> (f64, bool) {
    if value.is_nan() {
        (-clip, true)
    } else if value > clip {
        (clip, true)
    } else if value < -clip {
        (-clip, true)
    } else {
        (value, false)
    }
}

/// Simulates `m` draws from the marginal: `θ ~ prior`, then `y ~ p(y | θ, d)`.
pub fn sample_marginal(
    design: &DesignPoint,
    prior: &PriorSpec,
    simulator: &dyn Simulator,
    m: usize,
    rng: &mut StreamRng,
) -> Result<MarginalDataset> {
    if m < 2 {
        return Err(invalid("the marginal dataset needs at least two samples"));
    }
    if prior.param_dim() != simulator.param_dim() {
        return Err(invalid("prior and simulator parameter dimensions differ"));
    }
    let dim = simulator.data_dim(design.dim());
    let mut samples = SampleSet::with_capacity(dim, m);
    for _ in 0..m {
        let theta = prior.sample_one(rng)?;
        simulator.simulate_into(&theta.theta, design, rng, samples.push_zeroed())?;
    }
    Ok(MarginalDataset { design: design.clone(), samples })
}

/// Fits standardisation statistics on the pooled numerator and denominator data.
pub fn fit_feature_map(numerator: &SampleSet, denominator: &MarginalDataset, kind: FeatureKind) -> FeatureMap {
    FeatureMap::fit(kind, &[numerator, &denominator.samples])
}

/// Simulates the positive class at `theta` and fits the ratio against `marginal`.
pub fn fit_ratio(
    design: &DesignPoint,
    theta: &[f64],
    simulator: &dyn Simulator,
    marginal: &MarginalDataset,
    cfg: &LfireConfig,
    rng: &mut StreamRng,
) -> Result<RatioModel> {
    cfg.validate()?;
    if marginal.design != *design {
        return Err(invalid("marginal dataset was simulated at a different design"));
    }
    let dim = simulator.data_dim(design.dim());
    let mut positives = SampleSet::with_capacity(dim, cfg.samples_per_class);
    for _ in 0..cfg.samples_per_class {
        simulator.simulate_into(theta, design, rng, positives.push_zeroed())?;
    }
    fit_ratio_samples(&positives, &marginal.samples, cfg)
}

/// Fits the log-ratio between two sample sets.
pub fn fit_ratio_samples(positives: &SampleSet, negatives: &SampleSet, cfg: &LfireConfig) -> Result<RatioModel> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(invalid("both classes need at least one sample"));
    }
    if positives.dim() != negatives.dim() {
        return Err(invalid("class sample dimensions differ"));
    }
    let kind = cfg.feature_kind(positives.dim());
    let feature_map = FeatureMap::fit(kind, &[positives, negatives]);
    let penalty = match &cfg.regularization {
        Regularization::InverseSampleSize => 1.0 / positives.len() as f64,
        Regularization::Fixed { penalty } => *penalty,
        Regularization::CrossValidated { folds, grid } => {
            select_penalty(positives, negatives, &feature_map, *folds, grid, cfg)
        }
    };
    let data = aggregate(&feature_map, &[(positives, None), (negatives, None)]);
    let settings = NewtonSettings { penalty, tol: cfg.tol, max_iter: cfg.max_iter };
    let fit = fit_newton(&data, &settings);
    let offset = (positives.len() as f64 / negatives.len() as f64).ln();
    Ok(RatioModel {
        intercept: fit.params[0] - offset,
        coefficients: fit.params[1..].to_vec(),
        feature_map,
        penalty,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Rows of `sets[0]` count as positives, the rest as negatives. A fold filter
/// `Some((k, folds, keep))` keeps rows with `(index % folds == k) == keep`.
type FoldFilter = Option<(usize, usize, bool)>;

/// Collapses identical data vectors into one weighted row each.
fn aggregate(map: &FeatureMap, sets: &[(&SampleSet, FoldFilter); 2]) -> CountData {
    let mut entries: Vec<(&[f64], bool)> = Vec::new();
    for (class, (set, filter)) in sets.iter().enumerate() {
        for (i, row) in set.rows().enumerate() {
            if let Some((k, folds, keep)) = filter {
                if (i % folds == *k) != *keep {
                    continue;
                }
            }
            entries.push((row, class == 0));
        }
    }
    entries.sort_by(|a, b| lexicographic(a.0, b.0));
    let mut unique: Vec<&[f64]> = Vec::new();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (row, positive) in entries {
        if unique.last().is_none_or(|last| lexicographic(last, row).is_ne()) {
            unique.push(row);
            positives.push(0.0);
            negatives.push(0.0);
        }
        let last = positives.len() - 1;
        if positive {
            positives[last] += 1.0;
        } else {
            negatives[last] += 1.0;
        }
    }
    let p = map.output_dim();
    let mut x = DMatrix::<f64>::zeros(unique.len(), p + 1);
    let mut features = vec![0.0; p];
    for (r, row) in unique.iter().enumerate() {
        map.transform_into(row, &mut features);
        x[(r, 0)] = 1.0;
        for (c, f) in features.iter().enumerate() {
            x[(r, c + 1)] = *f;
        }
    }
    CountData { x, positives, negatives }
}

fn select_penalty(
    positives: &SampleSet,
    negatives: &SampleSet,
    map: &FeatureMap,
    folds: usize,
    grid: &[f64],
    cfg: &LfireConfig,
) -> f64 {
    let mut best = (f64::INFINITY, grid[0]);
    for &penalty in grid {
        let settings = NewtonSettings { penalty, tol: cfg.tol, max_iter: cfg.max_iter };
        let mut held_out = 0.0;
        for k in 0..folds {
            let train = aggregate(map, &[(positives, Some((k, folds, false))), (negatives, Some((k, folds, false)))]);
            let test = aggregate(map, &[(positives, Some((k, folds, true))), (negatives, Some((k, folds, true)))]);
            if train.x.nrows() == 0 || test.x.nrows() == 0 {
                continue;
            }
            let fit = fit_newton(&train, &settings);
            held_out += mean_log_loss(&test, &fit.params) * test.total();
        }
        if held_out < best.0 {
            best = (held_out, penalty);
        }
    }
    best.1
}
