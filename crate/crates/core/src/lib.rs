//! Surrogate-assisted estimation of average treatment effects when the primary
//! outcome is missing at random.
//!
//! The crate provides
//!
//! * [`data`]: observations, datasets, stratified folds, CSV / JSON-lines IO;
//! * [`dgp`]: linear-Gaussian synthetic designs with closed-form truth;
//! * [`nuisance`]: logistic IRLS, ridge, boosted stumps, density ratios, oracles;
//! * [`crossfit`]: the K-fold cross-fitting engine;
//! * [`influence`] and [`estimators`]: influence functions, point estimates,
//!   plug-in variances and Wald intervals;
//! * [`bounds`]: efficiency lower bounds by closed form and Monte Carlo;
//! * [`harness`]: replicated simulation studies.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the data
//! pipeline is fixed to [`Real`].

pub mod bounds;
pub mod crossfit;
pub mod data;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod influence;
pub mod linalg;
pub mod nuisance;
pub mod qmc;
pub mod scalar;
pub mod seeding;
pub mod stats;

/// Floating point type of datasets, fitted models and reports.
pub type Real = f64;

/// Influence-function terms in the pipeline precision.
pub type Nuisances = influence::NuisanceValues<Real>;

pub use bounds::{compute_bounds, BoundId, BoundRequest, BoundSet, BoundValue, Method};
pub use crossfit::{cross_fit, CrossFitPlan, NuisanceFits};
pub use data::{
    dataset_split_counts, make_folds, Dataset, EstimateReport, FoldAssignment, Observation,
    Scale, SplitCounts,
};
pub use dgp::{generate, truth, DgpSpec, Family, Truth, TruthReport};
pub use error::{Error, Result};
pub use estimators::{estimate, variance_and_ci, EstimatorConfig, EstimatorKind};
pub use harness::{run_scenario, MetricsReport, ScenarioConfig};
pub use influence::InfluenceKind;
pub use nuisance::LearnerSpec;
pub use scalar::Scalar;
