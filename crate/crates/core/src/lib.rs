//! Sign-flip score tests for generalized linear models.
//!
//! The library tests a target regression coefficient (or block of
//! coefficients) in a GLM by comparing the observed effective score against a
//! reference distribution obtained by randomly sign-flipping each
//! observation's score contribution. The standardized variant divides every
//! flipped statistic by its own plug-in standard deviation, which makes the
//! test robust to arbitrary misspecification of the variance model.
//!
//! Modules:
//! - [`glm`]: exponential-dispersion families, links, and null-model fitting.
//! - [`score`]: projections, flip plans, univariate sign-flip tests.
//! - [`multivariate`]: quadratic-form combination for multi-dimensional targets.
//! - [`comparators`]: parametric and sandwich Wald baselines.
//! - [`oracle`]: slow dense reference implementations used for verification.
//! - [`selfcheck`]: the oracle-equivalence suite behind the `selfcheck` command.
//! - [`sim`]: data-generating processes and the Monte Carlo harness.

pub use nalgebra;

pub mod comparators;
pub mod error;
pub mod glm;
pub mod multivariate;
pub mod oracle;
pub mod rng;
pub mod score;
pub mod selfcheck;
pub mod sim;

pub use error::{Error, Result};
pub use glm::{fit_null, DesignData, Family, FamilyKind, Link, NullFit};
pub use score::{
    build_projection, run_univariate_test, Alternative, FlipPlan, Projection, ScoreTestResult,
    Variant,
};
