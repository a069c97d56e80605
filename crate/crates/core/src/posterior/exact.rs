//! Exact Death-model posterior on a grid of infection rates.

use serde::{Deserialize, Serialize};

use crate::design::DesignPoint;
use crate::error::{invalid, Error, Result};
use crate::prior::PriorSpec;
use crate::simulators::{death_log_likelihood, DeathConfig};

pub const EXACT_GRID_POINTS: usize = 512;
pub const EXACT_GRID_UPPER: f64 = 6.0;

/// A density tabulated on an increasing grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl GridDensity {
    /// Evenly spaced grid `upper·k/points`, `k = 1..=points`.
    pub fn uniform_grid(upper: f64, points: usize) -> Vec<f64> {
        (1..=points).map(|k| upper * k as f64 / points as f64).collect()
    }

    pub fn trapezoid_mass(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(g, d)| 0.5 * (g[1] - g[0]) * (d[0] + d[1]))
            .sum()
    }

    /// Rescales so the trapezoid mass is one.
    pub fn normalised(mut self) -> Result<Self> {
        let mass = self.trapezoid_mass();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::DegeneratePosterior("density has no mass on the grid".into()));
        }
        for d in &mut self.density {
            *d /= mass;
        }
        Ok(self)
    }

    /// Cumulative trapezoid mass at each grid point, divided by the total.
    fn cdf(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.grid.len()];
        for k in 1..self.grid.len() {
            acc[k] = acc[k - 1] + 0.5 * (self.grid[k] - self.grid[k - 1]) * (self.density[k] + self.density[k - 1]);
        }
        let total = *acc.last().unwrap_or(&0.0);
        acc.iter().map(|a| a / total).collect()
    }

    /// Quantile by linear interpolation of the trapezoid CDF.
    pub fn quantile(&self, q: f64) -> f64 {
        let cdf = self.cdf();
        let k = cdf.partition_point(|c| *c < q);
        if k == 0 {
            return self.grid[0];
        }
        if k >= cdf.len() {
            return *self.grid.last().unwrap();
        }
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let t = if c1 > c0 { (q - c0) / (c1 - c0) } else { 0.0 };
        self.grid[k - 1] + t * (self.grid[k] - self.grid[k - 1])
    }

    fn moment(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mass = self.trapezoid_mass();
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(g, d)| 0.5 * (g[1] - g[0]) * (d[0] * f(g[0]) + d[1] * f(g[1])))
            .sum::<f64>()
            / mass
    }

    pub fn mean(&self) -> f64 {
        self.moment(|x| x)
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        self.moment(|x| (x - m).powi(2)).sqrt()
    }

    /// Total variation distance to another density on the same grid.
    pub fn total_variation(&self, other: &GridDensity) -> Result<f64> {
        if self.grid != other.grid {
            return Err(invalid("densities live on different grids"));
        }
        let diff = GridDensity {
            grid: self.grid.clone(),
            density: self.density.iter().zip(&other.density).map(|(a, b)| (a - b).abs()).collect(),
        };
        Ok(0.5 * diff.trapezoid_mass())
    }
}

/// Posterior `∝ exp(log L(b)) p(b)` on `grid`, trapezoid-normalised.
pub fn exact_death_posterior(
    infected: &[u32],
    design: &DesignPoint,
    prior: &PriorSpec,
    cfg: &DeathConfig,
    grid: &[f64],
) -> Result<GridDensity> {
    if prior.param_dim() != 1 {
        return Err(Error::Unsupported("the exact posterior needs a one-dimensional prior".into()));
    }
    if infected.len() != design.dim() {
        return Err(invalid("observation length does not match the design"));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("posterior grid must be increasing with at least two points"));
    }
    let log_post: Vec<f64> = grid
        .iter()
        .map(|&b| {
            let p = prior.density(&[b]);
            if p > 0.0 {
                death_log_likelihood(b, design, infected, cfg) + p.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let m = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::DegeneratePosterior("observation has zero likelihood on the grid".into()));
    }
    GridDensity { grid: grid.to_vec(), density: log_post.iter().map(|l| (l - m).exp()).collect() }.normalised()
}
