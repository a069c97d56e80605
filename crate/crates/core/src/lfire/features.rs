//! Feature maps applied to simulated data before logistic regression.

use serde::{Deserialize, Serialize};

use super::SampleSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Standardised data vector.
    Raw,
    /// All monomials of degree ≤ 2 in the standardised data (intercept separate).
    Poly2,
    /// Standardised data and their squares, no cross terms.
    Poly2Diagonal,
}

impl FeatureKind {
    pub fn output_dim(self, input_dim: usize) -> usize {
        match self {
            FeatureKind::Raw => input_dim,
            FeatureKind::Poly2 => input_dim + input_dim * (input_dim + 1) / 2,
            FeatureKind::Poly2Diagonal => 2 * input_dim,
        }
    }
}

/// Standardisation statistics plus the monomial expansion to apply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub kind: FeatureKind,
    pub input_dim: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Inputs with (numerically) zero spread; they standardise to zero.
    pub constant: Vec<bool>,
}

impl FeatureMap {
    /// Map with zero mean and unit scale.
    pub fn identity(kind: FeatureKind, input_dim: usize) -> Self {
        Self {
            kind,
            input_dim,
            mean: vec![0.0; input_dim],
            scale: vec![1.0; input_dim],
            constant: vec![false; input_dim],
        }
    }

    /// Fits standardisation statistics on the pooled rows of all `sets`.
    pub fn fit(kind: FeatureKind, sets: &[&SampleSet]) -> Self {
        let dim = sets.first().map_or(0, |s| s.dim());
        let mut count = 0.0;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        // Welford
        for set in sets {
            for row in set.rows() {
                count += 1.0;
                for k in 0..dim {
                    let delta = row[k] - mean[k];
                    mean[k] += delta / count;
                    m2[k] += delta * (row[k] - mean[k]);
                }
            }
        }
        let mut scale = vec![1.0; dim];
        let mut constant = vec![false; dim];
        for k in 0..dim {
            let var = if count > 0.0 { m2[k] / count } else { 0.0 };
            let sd = var.max(0.0).sqrt();
            if sd > 1e-12 * mean[k].abs().max(1.0) {
                scale[k] = sd;
            } else {
                constant[k] = true;
            }
        }
        Self { kind, input_dim: dim, mean, scale, constant }
    }

    pub fn output_dim(&self) -> usize {
        self.kind.output_dim(self.input_dim)
    }

    /// Writes the features of `y` into `out` (length `output_dim`).
    pub fn transform_into(&self, y: &[f64], out: &mut [f64]) {
        let d = self.input_dim;
        for k in 0..d {
            out[k] = if self.constant[k] { 0.0 } else { (y[k] - self.mean[k]) / self.scale[k] };
        }
        match self.kind {
            FeatureKind::Raw => {}
            FeatureKind::Poly2Diagonal => {
                for k in 0..d {
                    out[d + k] = out[k] * out[k];
                }
            }
            FeatureKind::Poly2 => {
                let mut idx = d;
                for a in 0..d {
                    for b in a..d {
                        out[idx] = out[a] * out[b];
                        idx += 1;
                    }
                }
            }
        }
    }

    pub fn transform(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.transform_into(y, &mut out);
        out
    }
}
