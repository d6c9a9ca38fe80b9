//! Conditional average treatment effect estimation for randomized experiments
//! with a known propensity score.
//!
//! The central estimator regresses the inverse-probability-weighted outcome
//! `Y·W`, `W = (T − p)/(p(1 − p))`, on covariates with the Lasso after removing
//! the part of `Y·W` explained by `W` and `B̂(X)·W`, where `B̂` is a cross-fitted
//! regression of the outcome on covariates. The projection leaves the
//! conditional mean `τ(x)` untouched and strips most of the noise the weighting
//! introduces.
//!
//! Modules:
//!
//! - [`data`]: datasets, CSV ingestion, standardization and fold plans.
//! - [`lasso`]: coordinate-descent Lasso with unpenalized columns and CV.
//! - [`forest`]: regression random forest and cross-fitting.
//! - [`transform`]: IPW weights, denoising regression, AIPW correspondence.
//! - [`estimators`]: DIPW-Lasso (joint and two-step), IPW-Lasso, DR- and T-learner.
//! - [`eval`]: RMSE, uplift curves, AUUC, bootstrap bands, subgroup effects.
//! - [`sim`]: the benchmark data-generating process and replication harness.

pub mod data;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod forest;
pub mod lasso;
mod linalg;
pub mod rng;
pub mod sim;
pub mod transform;

pub use data::{Dataset, FoldPlan, PropensitySource, Schema, StandardizationRecord};
pub use error::{Error, Result};
pub use estimators::{BChoice, CateModel, EstimatorConfig, ModelKind};
pub use eval::{SubgroupReport, UpliftCurve};
pub use forest::{ForestSpec, NuisanceLearner, RegressionForest};
pub use lasso::{PenaltySpec, SelectionRule, SparseLinearFit};
pub use sim::{DgpSpec, Method, ReplicationReport, SimulatedSample};
pub use transform::{DenoisingDiagnostics, PseudoOutcomeSet};

/// Schema version written as `format_version` into every JSON artifact.
pub const FORMAT_VERSION: u32 = 1;
