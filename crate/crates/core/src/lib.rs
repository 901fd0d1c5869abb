//! Spectral deconfounding for high-dimensional sparse additive models.
//!
//! The observed covariates follow a confounded factor model `X = Psi' H + E`
//! and the response is `Y = f0(X) + H' psi + e`, where `f0` is a sparse sum of
//! univariate nonlinear components and `H` holds hidden confounders that act
//! on both `X` and `Y`. Fitting an additive model on `(X, Y)` directly
//! absorbs the confounding bias; this crate removes most of it by
//! premultiplying the response and the basis expansions with a spectral
//! transform built from the SVD of `X` (a trim transform by default), then
//! solving a group-lasso problem over per-covariate B-spline bases.
//!
//! Modules:
//! - [`spectral`]: SVD-based trim / PCA transforms and the eigenvalue-ratio
//!   estimator for the number of hidden factors.
//! - [`basis`]: cubic B-spline bases with quantile knots and per-covariate
//!   orthonormalization.
//! - [`grouplasso`]: block-coordinate proximal solver for the transformed
//!   group-lasso objective.
//! - [`hdam`]: the additive-model estimators (deconfounded, naive,
//!   estimated-factors) and the serializable fitted model.
//! - [`modelselect`]: two-stage K/lambda selection by k-fold cross-validation.
//! - [`simgen`]: seeded generators for the confounded simulation designs.
//! - [`metrics`]: Monte-Carlo function MSE, screening and ranking metrics.
//! - [`diagnostics`]: compatibility-constant bounds, confounding leakage and
//!   spectrum reports.
//! - [`io`]: headerless numeric CSV helpers shared with the CLI.

pub mod basis;
pub mod diagnostics;
pub mod grouplasso;
pub mod hdam;
pub mod io;
mod linalg;
pub mod metrics;
pub mod modelselect;
pub mod simgen;
pub mod spectral;
