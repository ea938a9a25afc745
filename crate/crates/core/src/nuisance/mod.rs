//! Propensity scores and pseudo-outcome regressions.

pub mod boost;
pub mod logistic;
pub mod propensity;
pub mod pseudo;

pub use boost::{fit_boosted, BoostConfig, BoostLoss, BoostedModel};
pub use propensity::{
    fit_propensity, marginal_propensity, NoiseScale, PropensityConfig, PropensityEstimate, PropensityMethod, PropensityModel,
};
pub use pseudo::{fit_pseudo_outcome, PseudoConfig, PseudoOutcomeRegressor, RegressionMethod};
