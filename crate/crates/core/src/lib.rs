//! Bayesian experimental design for simulator-based models.
//!
//! The expected utility of a design is the mutual information between
//! parameters and data. It is estimated by Monte Carlo over prior draws, with
//! the intractable likelihood-to-marginal ratio obtained by logistic
//! regression between data simulated at a fixed parameter and data simulated
//! from the marginal. Designs are chosen by grid search or by Bayesian
//! optimisation with a Gaussian-process surrogate, and the same ratios give
//! weighted posterior samples for an observation at the chosen design.

pub mod bayesopt;
pub mod design;
pub mod error;
pub mod lfire;
pub mod posterior;
pub mod prior;
pub mod rng;
pub mod simulators;
pub mod special;
pub mod utility;

pub use design::{make_grid, DesignPoint, DesignSpace};
pub use error::{Error, Result};
pub use prior::{sample_prior, ParameterDraw, PriorSpec};
pub use rng::{RngSeed, StreamRng};
