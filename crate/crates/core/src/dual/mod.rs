//! Dual programs: scalar solves, the marginal estimator and the cross-fitted network estimator.

pub mod conditional;
pub mod loss;
pub mod marginal;
pub mod network;
pub mod orthogonality;
pub mod solve;
pub mod train;

pub use conditional::{debiased_loss, evaluate_bound, fit_conditional, split_folds, BoundEstimate, ConditionalConfig, ConditionalFit, FoldFit, FoldValue, PropensitySource};
pub use loss::{row_loss, LossSettings, RowInput, Standardisation};
pub use marginal::{fit_marginal, ArmBound, MarginalFit};
pub use network::DualNetwork;
pub use orthogonality::orthogonality_probe;
pub use solve::{dual_bound, dual_on_values, dual_value_minimize, DualSolution};
pub use train::TrainHistory;
