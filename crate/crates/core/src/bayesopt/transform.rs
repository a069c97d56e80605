//! Bijection between the unit box and ordered measurement times.
//!
//! Times are built from the top: `τ_n = lo + (hi - lo) v_n` and
//! `τ_k = lo + (τ_{k+1} - lo) v_k`, with `v_k = w_k^{1/k}` and `w_k` an
//! affine image of a box coordinate kept away from the endpoints so the
//! order stays strict. The power is the inverse Beta(k, 1) CDF, so a
//! uniform point of the box gives the order statistics of `n` uniform
//! times and space-filling box designs stay space-filling in time.

use crate::design::{DesignPoint, DesignSpace};
use crate::error::Result;

/// Margin keeping each `w` inside `[ε, 1 - ε]`.
pub const MARGIN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct OrderedTransform {
    dim: usize,
    lower: f64,
    upper: f64,
}

impl OrderedTransform {
    pub fn new(space: &DesignSpace) -> Result<Self> {
        space.validate()?;
        Ok(Self { dim: space.dim, lower: space.lower, upper: space.upper })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn fraction_to_unit(&self, k: usize, v: f64) -> f64 {
        let u = if k + 1 == self.dim {
            (v - MARGIN) / (1.0 - MARGIN)
        } else {
            (v - MARGIN) / (1.0 - 2.0 * MARGIN)
        };
        u.clamp(0.0, 1.0)
    }

    fn unit_to_fraction(&self, k: usize, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if k + 1 == self.dim {
            MARGIN + (1.0 - MARGIN) * u
        } else {
            MARGIN + (1.0 - 2.0 * MARGIN) * u
        }
    }

    /// Ordered times for a point of the unit box. Coordinates outside `[0, 1]` are clamped.
    pub fn to_times(&self, unit: &[f64]) -> Vec<f64> {
        assert_eq!(unit.len(), self.dim, "unit point has the wrong dimension");
        let mut times = vec![0.0; self.dim];
        let mut top = self.upper;
        for k in (0..self.dim).rev() {
            let v = self.unit_to_fraction(k, unit[k]).powf(1.0 / (k + 1) as f64);
            times[k] = self.lower + (top - self.lower) * v;
            top = times[k];
        }
        times
    }

    pub fn to_design(&self, unit: &[f64]) -> Result<DesignPoint> {
        DesignPoint::new(self.to_times(unit))
    }

    /// Inverse map. Designs too close to the boundary are clamped onto the box.
    pub fn to_unit(&self, design: &DesignPoint) -> Vec<f64> {
        assert_eq!(design.dim(), self.dim, "design has the wrong dimension");
        let t = design.times();
        (0..self.dim)
            .map(|k| {
                let top = if k + 1 == self.dim { self.upper } else { t[k + 1] };
                let v = (t[k] - self.lower) / (top - self.lower);
                self.fraction_to_unit(k, v.powi(k as i32 + 1))
            })
            .collect()
    }
}
