//! Semi-supervised inference for one coefficient of a high-dimensional
//! linear regression.
//!
//! The target is `theta`, the coefficient on a primary predictor `Z` in the
//! best linear predictor of `Y` given `X = (Z, W)`, where `W` holds `d`
//! control covariates. Labeled rows carry `(Z, W, Y)`; unlabeled rows carry
//! only `(Z, W)` and are used to sharpen the auxiliary regression of `Z` on
//! `W`.
//!
//! Estimators:
//!
//! - [`estimators::ss_sr`]: sparsity-robust estimator (dense primary model
//!   allowed), with a two-way labeled split.
//! - [`estimators::ss_sr_modified`]: three-way split variant with a capped
//!   leverage constraint on the debiasing direction.
//! - [`estimators::ss_dfa`]: degrees-of-freedom adjusted estimator with a
//!   two-constraint Dantzig selector for the auxiliary slope.
//! - [`estimators::ss_dr`]: cross-fitted doubly robust estimator.
//!
//! Supervised counterparts are the same estimators run with no unlabeled rows.
//!
//! The crate is `no_std` and only needs `alloc`. File IO, the parallel Monte
//! Carlo driver and the command-line front end live in the `semisup` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod math;
pub mod normal;
pub mod rng;
pub mod simgen;
pub mod solver;
pub mod tuning;

pub use dataset::{center, make_split, CenteringInfo, SemiSupervisedDataset, SplitPlan, SplitScheme};
pub use error::{DataError, EstimatorError, SolverError};
pub use estimators::{
    EstimateReport, EstimatorConfig, EstimatorId, LambdaPolicy, UPolicy, VarianceMode,
};
pub use linalg::DesignMatrix;
pub use simgen::{generate, true_theta, GeneratedInstance, ModelId, ScenarioSpec};
pub use solver::{SolverConfig, SolverResult};
