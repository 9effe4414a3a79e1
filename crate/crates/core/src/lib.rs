//! Class-prior estimation under label shift.
//!
//! Given soft outputs of a classifier trained under a known class prior ε,
//! the estimators in [`estimators`] recover the unknown test prior π by EM
//! with a Dirichlet prior whose hyperparameters are re-estimated every
//! iteration, either over a stored batch or one sample at a time. [`crb`]
//! gives the matching Cramér–Rao bounds and [`harness`] runs seeded Monte
//! Carlo experiments on synthetic classifiers or posterior dumps.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crb;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod math;
pub mod priors;

pub use error::{Error, Result};
pub use estimators::{
    fmapls, mlls, online_fmapls, reweight_posterior, AlphaMode, EstimateReport, EstimatorConfig, PosteriorBatch,
};
pub use math::{DirichletParams, SimplexVector};
