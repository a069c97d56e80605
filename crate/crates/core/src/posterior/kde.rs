//! Product Gaussian kernel density with per-dimension Silverman bandwidths.

use serde::{Deserialize, Serialize};

use super::PosteriorSamples;
use crate::error::{invalid, Result};
use crate::special::norm_pdf;

/// Bandwidth floor as a fraction of the prior range.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeDensity {
    /// Distinct sample points.
    points: Vec<Vec<f64>>,
    /// Fraction of the sample at each point.
    weights: Vec<f64>,
    bandwidths: Vec<f64>,
    /// Dimensions whose bandwidth was floored.
    floored: Vec<bool>,
}

/// Collapses repeated rows into `(point, multiplicity)` pairs.
fn distinct(draws: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut sorted: Vec<&Vec<f64>> = draws.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for row in sorted {
        if points.last().is_some_and(|p| p == row) {
            *counts.last_mut().unwrap() += 1.0;
        } else {
            points.push(row.clone());
            counts.push(1.0);
        }
    }
    let n = draws.len() as f64;
    (points, counts.into_iter().map(|c| c / n).collect())
}

/// Fits a KDE to the resampled draws. `ranges[j]` is the prior width of
/// dimension `j`, used only to floor a zero bandwidth.
pub fn kde_fit(samples: &PosteriorSamples, ranges: &[f64]) -> Result<KdeDensity> {
    let d = samples.dim();
    if samples.is_empty() || d == 0 {
        return Err(invalid("KDE needs at least one sample"));
    }
    if ranges.len() != d || ranges.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(invalid("KDE needs one positive finite range per dimension"));
    }
    let n = samples.len() as f64;
    let factor = (4.0 / ((d as f64 + 2.0) * n)).powf(1.0 / (d as f64 + 4.0));
    let mut bandwidths = Vec::with_capacity(d);
    let mut floored = Vec::with_capacity(d);
    for (j, range) in ranges.iter().enumerate() {
        let col = samples.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = if col.len() > 1 {
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let h = var.sqrt() * factor;
        let floor = BANDWIDTH_FLOOR * range;
        floored.push(!(h >= floor));
        bandwidths.push(if h >= floor { h } else { floor });
    }
    let (points, weights) = distinct(&samples.draws);
    Ok(KdeDensity { points, weights, bandwidths, floored })
}

impl KdeDensity {
    /// Kernel centres with equal weight and fixed bandwidths.
    pub fn with_bandwidths(draws: &[Vec<f64>], bandwidths: Vec<f64>) -> Result<Self> {
        if draws.is_empty() || draws.iter().any(|p| p.len() != bandwidths.len()) {
            return Err(invalid("every point needs one bandwidth per dimension"));
        }
        if bandwidths.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(invalid("bandwidths must be positive"));
        }
        let (points, weights) = distinct(draws);
        let floored = vec![false; bandwidths.len()];
        Ok(Self { points, weights, bandwidths, floored })
    }

    pub fn dim(&self) -> usize {
        self.bandwidths.len()
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn floored(&self) -> &[bool] {
        &self.floored
    }

    pub fn is_flagged(&self) -> bool {
        self.floored.iter().any(|f| *f)
    }

    pub fn distinct_points(&self) -> usize {
        self.points.len()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "evaluation point has the wrong dimension");
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| {
                w * p
                    .iter()
                    .zip(x)
                    .zip(&self.bandwidths)
                    .map(|((c, v), h)| norm_pdf((v - c) / h) / h)
                    .product::<f64>()
            })
            .sum()
    }

    /// Marginal density of dimension `j`.
    pub fn marginal_density(&self, j: usize, x: f64) -> f64 {
        let h = self.bandwidths[j];
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * norm_pdf((x - p[j]) / h) / h)
            .sum()
    }

    /// Lower and upper sample extremes of dimension `j`, padded by `pad` bandwidths.
    pub fn padded_range(&self, j: usize, pad: f64) -> (f64, f64) {
        let lo = self.points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
        let hi = self.points.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max);
        (lo - pad * self.bandwidths[j], hi + pad * self.bandwidths[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_kernels_at_plus_minus_one() {
        let k = KdeDensity::with_bandwidths(&[vec![-1.0], vec![1.0]], vec![1.0]).unwrap();
        let expected = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((k.density(&[0.0]) - expected).abs() < 1e-15);
        assert!((k.density(&[0.7]) - k.density(&[-0.7])).abs() < 1e-15);
    }

    #[test]
    fn silverman_bandwidth_in_one_dimension() {
        let s = PosteriorSamples::from_draws(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let k = kde_fit(&s, &[10.0]).unwrap();
        let sd = (5.0f64 / 3.0).sqrt();
        let h = sd * (4.0f64 / 12.0).powf(0.2);
        assert!((k.bandwidths()[0] - h).abs() < 1e-15);
        assert!(!k.is_flagged());
    }

    #[test]
    fn constant_dimension_is_floored() {
        let s = PosteriorSamples::from_draws(vec![vec![1.0, 0.1], vec![2.0, 0.1], vec![3.0, 0.1]]);
        let k = kde_fit(&s, &[0.5, 0.5]).unwrap();
        assert_eq!(k.bandwidths()[1], 0.5e-3);
        assert_eq!(k.floored(), &[false, true]);
        assert_eq!(k.distinct_points(), 3);
    }
}
