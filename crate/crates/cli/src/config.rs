//! Experiment configuration and its validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use implicit_bed::lfire::{FeatureKind, LfireConfig, Regularization, DEFAULT_CLIP};
use implicit_bed::posterior::DEFAULT_POSTERIOR_SAMPLES;
use implicit_bed::simulators::{DeathConfig, SirConfig};
use implicit_bed::utility::{Estimator, QuadratureConfig, RngPolicy, DEFAULT_PRIOR_SAMPLES};
use implicit_bed::{DesignSpace, PriorSpec};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Death,
    Sir,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Grid,
    Bo,
    Random,
    Equidistant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Lfire,
    Analytic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub method: Method,
    pub estimator: EstimatorKind,
    /// Number of measurement times.
    pub dims: usize,
    /// Design bounds; model defaults when absent.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub grid_step: Option<f64>,
    pub prior: Option<PriorSpec>,
    pub population: u32,
    pub dt: f64,
    pub prior_samples: usize,
    pub lfire_samples: usize,
    pub features: Option<FeatureKind>,
    pub regularization: Regularization,
    pub clip: f64,
    pub rng_policy: RngPolicy,
    pub quadrature_nodes: usize,
    pub quadrature_upper: f64,
    pub budget: usize,
    pub init_count: Option<usize>,
    pub replicates: usize,
    pub posterior_samples: usize,
    pub density_grid_points: usize,
    /// Ground-truth parameters for generating observations; model defaults when absent.
    pub truth: Option<Vec<f64>>,
    pub seed: u64,
    pub outdir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let lfire = LfireConfig::default();
        let quad = QuadratureConfig::default();
        Self {
            model: ModelKind::Death,
            method: Method::Grid,
            estimator: EstimatorKind::Lfire,
            dims: 1,
            lower: None,
            upper: None,
            grid_step: None,
            prior: None,
            population: 50,
            dt: 0.01,
            prior_samples: DEFAULT_PRIOR_SAMPLES,
            lfire_samples: lfire.samples_per_class,
            features: None,
            regularization: lfire.regularization,
            clip: DEFAULT_CLIP,
            rng_policy: RngPolicy::default(),
            quadrature_nodes: quad.nodes,
            quadrature_upper: quad.upper,
            budget: 30,
            init_count: None,
            replicates: 50,
            posterior_samples: DEFAULT_POSTERIOR_SAMPLES,
            density_grid_points: 512,
            truth: None,
            seed: 0,
            outdir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn for_model(model: ModelKind) -> Self {
        Self { model, ..Self::default() }
    }

    pub fn space(&self) -> DesignSpace {
        let base = match self.model {
            ModelKind::Death => DesignSpace::death(self.dims),
            ModelKind::Sir => DesignSpace::sir(self.dims),
        };
        DesignSpace {
            dim: self.dims,
            lower: self.lower.unwrap_or(base.lower),
            upper: self.upper.unwrap_or(base.upper),
            grid_step: self.grid_step.or(base.grid_step),
        }
    }

    pub fn prior_spec(&self) -> PriorSpec {
        self.prior.clone().unwrap_or_else(|| match self.model {
            ModelKind::Death => PriorSpec::death_default(),
            ModelKind::Sir => PriorSpec::sir_default(),
        })
    }

    pub fn truth_params(&self) -> Vec<f64> {
        self.truth.clone().unwrap_or_else(|| match self.model {
            ModelKind::Death => vec![1.5],
            ModelKind::Sir => vec![0.15, 0.05],
        })
    }

    pub fn lfire_config(&self) -> LfireConfig {
        LfireConfig {
            samples_per_class: self.lfire_samples,
            features: self.features,
            regularization: self.regularization.clone(),
            clip: self.clip,
            ..LfireConfig::default()
        }
    }

    pub fn estimator_choice(&self) -> Estimator {
        match self.estimator {
            EstimatorKind::Lfire => Estimator::Lfire,
            EstimatorKind::Analytic => Estimator::Analytic { nodes: self.quadrature_nodes, upper: self.quadrature_upper },
        }
    }

    pub fn death_config(&self) -> DeathConfig {
        DeathConfig { population: self.population, dt: self.dt, initial_infected: 0 }
    }

    pub fn sir_config(&self) -> SirConfig {
        SirConfig { population: self.population, dt: self.dt }
    }

    pub fn param_dim(&self) -> usize {
        match self.model {
            ModelKind::Death => 1,
            ModelKind::Sir => 2,
        }
    }

    /// Every violated constraint, or `Ok` when the configuration is usable.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut v: Vec<String> = Vec::new();
        if self.dims == 0 {
            v.push("dims must be positive".into());
        }
        if self.estimator == EstimatorKind::Analytic && self.model != ModelKind::Death {
            v.push("the analytic estimator is only available for the death model".into());
        }
        if self.method == Method::Grid && self.dims != 1 {
            v.push(format!("grid search needs dims = 1, got {}", self.dims));
        }
        if self.method == Method::Equidistant && self.dims == 0 {
            v.push("the equidistant design needs dims >= 1".into());
        }
        if self.dims > 0 {
            if let Err(e) = self.space().validate() {
                v.push(e.to_string());
            }
        }
        if self.method == Method::Grid && self.space().grid_step.is_none() {
            v.push("grid search needs grid_step".into());
        }
        let prior = self.prior_spec();
        match prior.validate() {
            Ok(()) if prior.param_dim() != self.param_dim() => v.push(format!(
                "prior has {} parameters but the {:?} model needs {}",
                prior.param_dim(),
                self.model,
                self.param_dim()
            )),
            Ok(()) => {}
            Err(e) => v.push(e.to_string()),
        }
        let truth = self.truth_params();
        if truth.len() != self.param_dim() || truth.iter().any(|t| !t.is_finite()) {
            v.push(format!("truth must hold {} finite values", self.param_dim()));
        } else if self.model == ModelKind::Sir && truth.iter().any(|t| !(0.0..=1.0).contains(t)) {
            v.push("SIR truth values must be probabilities".into());
        } else if self.model == ModelKind::Death && truth[0] < 0.0 {
            v.push("death truth rate must be non-negative".into());
        }
        if self.population == 0 {
            v.push("population must be positive".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            v.push("dt must be positive".into());
        }
        for (name, value) in [
            ("prior_samples", self.prior_samples),
            ("budget", self.budget),
            ("posterior_samples", self.posterior_samples),
        ] {
            if value == 0 {
                v.push(format!("{name} must be positive"));
            }
        }
        if self.lfire_samples < 2 {
            v.push("lfire_samples must be at least 2".into());
        }
        if self.density_grid_points < 2 {
            v.push("density_grid_points must be at least 2".into());
        }
        if let Err(e) = self.lfire_config().validate() {
            v.push(e.to_string());
        }
        if self.estimator == EstimatorKind::Analytic && self.quadrature_nodes < 8 {
            v.push("quadrature_nodes must be at least 8".into());
        }
        if !(self.quadrature_upper.is_finite() && self.quadrature_upper > 0.0) {
            v.push("quadrature_upper must be positive".into());
        }
        if self.method == Method::Bo {
            let init = self.init_count.unwrap_or(2);
            if init < 2 {
                v.push("init_count must be at least 2".into());
            }
            if self.init_count.is_some_and(|i| i > self.budget) {
                v.push("init_count must not exceed budget".into());
            }
            if self.budget < 2 {
                v.push("BO needs a budget of at least 2".into());
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
        ExperimentConfig::for_model(ModelKind::Sir).validate().unwrap();
    }

    #[test]
    fn every_violation_is_listed() {
        let cfg = ExperimentConfig {
            model: ModelKind::Sir,
            estimator: EstimatorKind::Analytic,
            dims: 2,
            prior_samples: 0,
            budget: 0,
            ..ExperimentConfig::default()
        };
        let CliError::Validation(v) = cfg.validate().unwrap_err() else { panic!("expected validation") };
        assert!(v.iter().any(|m| m.contains("analytic")));
        assert!(v.iter().any(|m| m.contains("grid search")));
        assert!(v.iter().any(|m| m.contains("prior_samples")));
        assert!(v.iter().any(|m| m.contains("budget")));
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"modle": "sir"}"#).is_err());
        let c: ExperimentConfig = serde_json::from_str(r#"{"model": "sir", "dims": 1}"#).unwrap();
        assert_eq!(c.model, ModelKind::Sir);
        assert_eq!(c.space().upper, 3.0);
    }
}
