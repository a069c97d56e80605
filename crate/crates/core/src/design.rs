//! Designs (ordered measurement times) and the design space they live in.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance used when deciding whether the upper bound lies on the grid.
const GRID_TOL: f64 = 1e-9;

/// Strictly increasing vector of measurement times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DesignPoint {
    times: Vec<f64>,
}

impl DesignPoint {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(invalid("design must contain at least one time"));
        }
        if let Some(t) = times.iter().find(|t| !t.is_finite() || **t <= 0.0) {
            return Err(invalid(format!("design time {t} must be finite and positive")));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!("design times {times:?} are not strictly increasing")));
        }
        Ok(Self { times })
    }

    pub fn single(time: f64) -> Result<Self> {
        Self::new(vec![time])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.times.len()
    }
}

impl TryFrom<Vec<f64>> for DesignPoint {
    type Error = Error;

    fn try_from(times: Vec<f64>) -> Result<Self> {
        Self::new(times)
    }
}

impl From<DesignPoint> for Vec<f64> {
    fn from(d: DesignPoint) -> Self {
        d.times
    }
}

/// Box `(lower, upper]` of admissible measurement times for `dim` ordered times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub dim: usize,
    pub lower: f64,
    pub upper: f64,
    pub grid_step: Option<f64>,
}

impl DesignSpace {
    pub fn new(dim: usize, lower: f64, upper: f64, grid_step: Option<f64>) -> Result<Self> {
        let space = Self { dim, lower, upper, grid_step };
        space.validate()?;
        Ok(space)
    }

    /// `(0, 4]` with a 0.1 grid.
    pub fn death(dim: usize) -> Self {
        Self { dim, lower: 0.0, upper: 4.0, grid_step: Some(0.1) }
    }

    /// `(0, 3]` with a 0.1 grid.
    pub fn sir(dim: usize) -> Self {
        Self { dim, lower: 0.0, upper: 3.0, grid_step: Some(0.1) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("design dimension must be positive"));
        }
        if !(self.lower.is_finite() && self.upper.is_finite()) || self.lower >= self.upper {
            return Err(invalid(format!(
                "design bounds ({}, {}] must satisfy lower < upper",
                self.lower, self.upper
            )));
        }
        if self.lower < 0.0 {
            return Err(invalid("design lower bound must be non-negative"));
        }
        if let Some(step) = self.grid_step {
            if !(step.is_finite() && step > 0.0) {
                return Err(invalid(format!("grid step {step} must be positive")));
            }
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, design: &DesignPoint) -> bool {
        design.dim() == self.dim
            && design.times().iter().all(|&t| t > self.lower && t <= self.upper)
    }

    pub fn check(&self, design: &DesignPoint) -> Result<()> {
        if self.contains(design) {
            Ok(())
        } else {
            Err(invalid(format!(
                "design {:?} is outside ({}, {}]^{}",
                design.times(),
                self.lower,
                self.upper,
                self.dim
            )))
        }
    }

    /// Evenly spaced design `lower + k (upper - lower) / n`, `k = 1..=n`.
    pub fn equidistant(&self) -> DesignPoint {
        let n = self.dim as f64;
        let times = (1..=self.dim)
            .map(|k| {
                if k == self.dim {
                    self.upper
                } else {
                    self.lower + k as f64 * self.range() / n
                }
            })
            .collect();
        DesignPoint { times }
    }
}

/// One-dimensional grid `lower + Δτ, lower + 2Δτ, …` up to `upper` inclusive.
pub fn make_grid(space: &DesignSpace) -> Result<Vec<DesignPoint>> {
    space.validate()?;
    let step = space
        .grid_step
        .ok_or_else(|| invalid("grid search requires a grid step"))?;
    if space.dim != 1 {
        return Err(Error::Unsupported(format!(
            "grid search over {} dimensions is not supported",
            space.dim
        )));
    }
    let ratio = space.range() / step;
    let nearest = ratio.round();
    let on_grid = (ratio - nearest).abs() <= GRID_TOL * nearest.max(1.0);
    let count = if on_grid { nearest as usize } else { ratio.floor() as usize };
    if count == 0 {
        return Err(invalid(format!(
            "grid step {step} is larger than the design range {}",
            space.range()
        )));
    }
    Ok((1..=count)
        .map(|k| {
            let t = if on_grid && k == count { space.upper } else { space.lower + k as f64 * step };
            DesignPoint { times: vec![t] }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn death_grid_has_forty_points() {
        let g = make_grid(&DesignSpace::death(1)).unwrap();
        assert_eq!(g.len(), 40);
        assert!((g[0].times()[0] - 0.1).abs() < 1e-12);
        assert_eq!(g[39].times()[0], 4.0);
    }

    #[test]
    fn sir_grid_has_thirty_points() {
        let g = make_grid(&DesignSpace::sir(1)).unwrap();
        assert_eq!(g.len(), 30);
        assert_eq!(g[29].times()[0], 3.0);
    }

    #[test]
    fn unit_step_gives_single_point() {
        let g = make_grid(&DesignSpace::new(1, 0.0, 1.0, Some(1.0)).unwrap()).unwrap();
        assert_eq!(g, vec![DesignPoint::single(1.0).unwrap()]);
    }

    #[test]
    fn off_grid_upper_is_excluded() {
        let g = make_grid(&DesignSpace::new(1, 0.0, 1.05, Some(0.1)).unwrap()).unwrap();
        assert_eq!(g.len(), 10);
        assert!(g.last().unwrap().times()[0] < 1.05);
    }

    #[test]
    fn multi_dimensional_grid_is_unsupported() {
        let err = make_grid(&DesignSpace::death(2)).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn design_must_be_strictly_increasing() {
        assert!(DesignPoint::new(vec![1.0, 1.0]).is_err());
        assert!(DesignPoint::new(vec![2.0, 1.0]).is_err());
        assert!(DesignPoint::new(vec![0.0]).is_err());
        assert!(DesignPoint::new(vec![]).is_err());
        assert!(DesignPoint::new(vec![0.5, 1.0]).is_ok());
    }

    #[test]
    fn equidistant_two_points() {
        let d = DesignSpace::death(2).equidistant();
        assert_eq!(d.times(), &[2.0, 4.0]);
        let d8 = DesignSpace::death(8).equidistant();
        assert_eq!(d8.times()[0], 0.5);
        assert_eq!(d8.times()[7], 4.0);
    }

    #[test]
    fn design_serialises_as_plain_array() {
        let d = DesignPoint::new(vec![0.5, 1.5]).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, "[0.5,1.5]");
        assert!(serde_json::from_str::<DesignPoint>("[1.5,0.5]").is_err());
    }
}
