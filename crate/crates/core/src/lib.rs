//! Pogit models for under-reported counts.
//!
//! True events follow `Y* ~ Poisson(lambda)` and each is reported with
//! probability `p`, so the observed count is `Y ~ Poisson(lambda * p)`. Both
//! `lambda` (log link) and `p` (logit or bounded-logit link) are linear in
//! covariates, optionally through B-spline bases, and are estimated jointly by
//! constrained maximum likelihood with optional Gaussian priors.
//!
//! - [`estimate`] fits a [`model::PogitSpec`] to a [`dataset::Dataset`].
//! - [`uq`] gives sandwich covariances and delta-method intervals.
//! - [`theory`] has the Cramér-Rao bound of the two-covariate model.
//! - [`simulate`] runs the bound sweeps and the nonlinear synthetic experiment.
//! - [`diagnose`] has AIC, likelihood-ratio tests and identifiability checks.
//! - [`config`], [`io`] and [`cli`] back the `pogit` binary.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod design;
pub mod diagnose;
pub mod error;
pub mod estimate;
pub mod io;
pub mod link;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod splines;
pub mod theory;
pub mod uq;

pub use dataset::Dataset;
pub use error::{PogitError, Result};
pub use estimate::{fit, FitOptions, FitResult};
pub use model::{ParameterVector, PogitSpec};
