//! Gaussian-process regression with a squared-exponential ARD kernel.
//!
//! Targets are standardised before fitting; hyperparameters live on the
//! standardised scale and predictions are mapped back.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::StreamRng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Largest diagonal jitter tried before giving up on a factorisation.
pub const MAX_JITTER: f64 = 1e-6;

/// Kernel hyperparameters on the standardised target scale.
#[derive(Clone, Debug, PartialEq)]
pub struct GpHyperparameters {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl GpHyperparameters {
    /// `[ln σ_f², ln ℓ_1, …, ln ℓ_d, ln σ_n²]`.
    pub fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.lengthscales.len() + 2);
        v.push(self.signal_variance.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_variance.ln());
        v
    }

    pub fn from_log(log: &[f64]) -> Self {
        let d = log.len() - 2;
        Self {
            signal_variance: log[0].exp(),
            lengthscales: log[1..=d].iter().map(|l| l.exp()).collect(),
            noise_variance: log[d + 1].exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpFitSettings {
    pub restarts: usize,
    pub max_iter: usize,
    /// Lengthscale bounds relative to the unit input range.
    pub lengthscale_bounds: (f64, f64),
    pub signal_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
}

impl Default for GpFitSettings {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iter: 200,
            lengthscale_bounds: (1e-2, 1e2),
            signal_bounds: (1e-8, 1e3),
            noise_bounds: (1e-6, 10.0),
        }
    }
}

impl GpFitSettings {
    fn log_bounds(&self, dim: usize) -> Vec<(f64, f64)> {
        let ln = |(a, b): (f64, f64)| (a.ln(), b.ln());
        let mut b = vec![ln(self.signal_bounds)];
        b.extend(std::iter::repeat_n(ln(self.lengthscale_bounds), dim));
        b.push(ln(self.noise_bounds));
        b
    }
}

#[derive(Clone, Debug)]
pub struct GpSurrogate {
    inputs: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    hyper: GpHyperparameters,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    degenerate: bool,
    log_marginal: f64,
}

fn sq_dist_scaled(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum()
}

fn correlation(inputs: &[Vec<f64>], ls: &[f64]) -> DMatrix<f64> {
    let n = inputs.len();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0;
        for j in 0..i {
            let v = (-0.5 * sq_dist_scaled(&inputs[i], &inputs[j], ls)).exp();
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Cholesky of `k`, adding growing diagonal jitter up to [`MAX_JITTER`].
fn factor(mut k: DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let mut jitter = 0.0;
    loop {
        if let Some(c) = k.clone().cholesky() {
            return Some((c, jitter));
        }
        let next = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if next > MAX_JITTER * (1.0 + 1e-9) {
            return None;
        }
        for i in 0..n {
            k[(i, i)] += next - jitter;
        }
        jitter = next;
    }
}

fn check_inputs(inputs: &[Vec<f64>], targets: &[f64]) -> Result<usize> {
    if inputs.len() != targets.len() {
        return Err(invalid("GP inputs and targets differ in length"));
    }
    let dim = inputs.first().map_or(0, Vec::len);
    if dim == 0 || inputs.iter().any(|x| x.len() != dim) {
        return Err(invalid("GP inputs must share a positive dimension"));
    }
    if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(invalid("GP data must be finite"));
    }
    Ok(dim)
}

/// Log marginal likelihood of `targets` and its gradient with respect to
/// `[ln σ_f², ln ℓ…, ln σ_n²]`.
pub fn log_marginal_likelihood(inputs: &[Vec<f64>], targets: &[f64], log_params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let dim = check_inputs(inputs, targets)?;
    if log_params.len() != dim + 2 {
        return Err(invalid("hyperparameter vector has the wrong length"));
    }
    let h = GpHyperparameters::from_log(log_params);
    let n = inputs.len();
    let kf = correlation(inputs, &h.lengthscales) * h.signal_variance;
    let mut k = kf.clone();
    for i in 0..n {
        k[(i, i)] += h.noise_variance;
    }
    let (chol, _) = factor(k).ok_or_else(|| Error::Simulation("kernel matrix is not positive definite".into()))?;
    let y = DVector::from_column_slice(targets);
    let alpha = chol.solve(&y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().take(n).map(|d| 2.0 * d.ln()).sum();
    let value = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;

    // W = αα' - K⁻¹; dL/dp = ½ tr(W ∂K/∂p)
    let kinv = chol.inverse();
    let w = &alpha * alpha.transpose() - kinv;
    let mut grad = vec![0.0; dim + 2];
    grad[0] = 0.5 * w.component_mul(&kf).sum();
    for (j, l) in h.lengthscales.iter().enumerate() {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..a {
                let d = (inputs[a][j] - inputs[b][j]) / l;
                s += w[(a, b)] * kf[(a, b)] * d * d;
            }
        }
        // off-diagonal pairs counted twice
        grad[1 + j] = s;
    }
    grad[dim + 1] = 0.5 * h.noise_variance * w.trace();
    Ok((value, grad))
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Projected gradient ascent with an adaptive step.
fn ascend(inputs: &[Vec<f64>], z: &[f64], start: Vec<f64>, bounds: &[(f64, f64)], max_iter: usize) -> Option<(Vec<f64>, f64)> {
    let mut x = start;
    project(&mut x, bounds);
    let (mut fx, mut g) = log_marginal_likelihood(inputs, z, &x).ok()?;
    let mut step = 0.1;
    for _ in 0..max_iter {
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + step * b).collect();
            project(&mut trial, bounds);
            let moved: f64 = trial.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if moved < 1e-9 {
                return Some((x, fx));
            }
            if let Ok((ft, gt)) = log_marginal_likelihood(inputs, z, &trial) {
                if ft > fx {
                    let gain = ft - fx;
                    x = trial;
                    fx = ft;
                    g = gt;
                    step = (step * 2.0).min(10.0);
                    accepted = true;
                    if gain < 1e-10 * (1.0 + fx.abs()) {
                        return Some((x, fx));
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some((x, fx))
}

impl GpSurrogate {
    /// Fits hyperparameters by multistart ascent of the log marginal likelihood.
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], settings: &GpFitSettings, rng: &mut StreamRng) -> Result<Self> {
        let dim = check_inputs(inputs, targets)?;
        if inputs.len() < 2 {
            return Err(invalid("a GP fit needs at least two observations"));
        }
        let (mean, scale, degenerate) = standardisation(targets);
        if degenerate {
            let hyper = GpHyperparameters {
                signal_variance: settings.signal_bounds.0,
                lengthscales: vec![1.0; dim],
                noise_variance: settings.noise_bounds.0,
            };
            return Self::build(inputs, targets, hyper, mean, scale, true);
        }
        let z: Vec<f64> = targets.iter().map(|t| (t - mean) / scale).collect();
        let bounds = settings.log_bounds(dim);
        let mut starts = vec![GpHyperparameters {
            signal_variance: 1.0,
            lengthscales: vec![0.3; dim],
            noise_variance: 0.1,
        }
        .to_log()];
        for _ in 1..settings.restarts.max(1) {
            let mut s = vec![rng.random_range(0.1f64.ln()..10f64.ln())];
            s.extend((0..dim).map(|_| rng.random_range(0.05f64.ln()..2f64.ln())));
            s.push(rng.random_range(1e-4f64.ln()..0.5f64.ln()));
            starts.push(s);
        }
        let mut best: Option<(Vec<f64>, f64)> = None;
        for s in starts {
            if let Some((x, f)) = ascend(inputs, &z, s, &bounds, settings.max_iter) {
                if best.as_ref().is_none_or(|b| f > b.1) {
                    best = Some((x, f));
                }
            }
        }
        let (x, _) = best.ok_or_else(|| Error::Simulation("no GP restart produced a valid fit".into()))?;
        Self::build(inputs, targets, GpHyperparameters::from_log(&x), mean, scale, false)
    }

    /// Conditions on the data with fixed hyperparameters (standardised scale).
    pub fn with_hyperparameters(inputs: &[Vec<f64>], targets: &[f64], hyper: GpHyperparameters) -> Result<Self> {
        let dim = check_inputs(inputs, targets)?;
        if hyper.lengthscales.len() != dim {
            return Err(invalid("one lengthscale per input dimension is required"));
        }
        let (mean, scale, degenerate) = standardisation(targets);
        Self::build(inputs, targets, hyper, mean, scale, degenerate)
    }

    fn build(
        inputs: &[Vec<f64>],
        targets: &[f64],
        hyper: GpHyperparameters,
        y_mean: f64,
        y_scale: f64,
        degenerate: bool,
    ) -> Result<Self> {
        let n = inputs.len();
        let mut k = correlation(inputs, &hyper.lengthscales) * hyper.signal_variance;
        for i in 0..n {
            k[(i, i)] += hyper.noise_variance;
        }
        let (chol, jitter) = factor(k).ok_or_else(|| Error::Simulation("kernel matrix is not positive definite".into()))?;
        let z = DVector::from_iterator(n, targets.iter().map(|t| (t - y_mean) / y_scale));
        let alpha = chol.solve(&z);
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let log_marginal = -0.5 * z.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
        Ok(Self {
            inputs: inputs.to_vec(),
            y_mean,
            y_scale,
            hyper,
            chol,
            alpha,
            jitter,
            degenerate,
            log_marginal,
        })
    }

    /// Posterior mean and latent variance (without observation noise) at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let h = &self.hyper;
        let k = DVector::from_iterator(
            self.inputs.len(),
            self.inputs
                .iter()
                .map(|xi| h.signal_variance * (-0.5 * sq_dist_scaled(xi, x, &h.lengthscales)).exp()),
        );
        let mean = k.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .lower_triangle()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a positive diagonal");
        let var = (h.signal_variance - v.norm_squared()).max(0.0);
        (self.y_mean + self.y_scale * mean, var * self.y_scale * self.y_scale)
    }

    pub fn hyperparameters(&self) -> &GpHyperparameters {
        &self.hyper
    }

    /// Prior mean of the surrogate on the target scale.
    pub fn prior_mean(&self) -> f64 {
        self.y_mean
    }

    /// Prior variance `σ_f²` on the target scale.
    pub fn prior_variance(&self) -> f64 {
        self.hyper.signal_variance * self.y_scale * self.y_scale
    }

    pub fn target_scale(&self) -> f64 {
        self.y_scale
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Set when the targets had no spread and the signal variance was floored.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }
}

/// Mean, scale and a flag for targets without spread.
fn standardisation(targets: &[f64]) -> (f64, f64, bool) {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        (mean, 1.0, true)
    } else {
        (mean, sd, false)
    }
}
