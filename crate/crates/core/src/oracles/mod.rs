//! Independent ground truth used to certify the estimators.

pub mod law;
pub mod primal;
pub mod scm;

pub use law::{exact_divergence, rn_derivative, DiscreteLaw, DivergenceValue, ExpFamilyLaw, Law};
pub use primal::{primal_on_values, primal_oracle, two_point_primal};
pub use scm::{binary_scm_grid, dpi_audit, scm_ground_truth, ArmLaws, AuditSummary, BinaryScm, GroundTruth};
