//! Semiparametric model-averaging quantile prediction.
//!
//! The conditional τ-quantile of a response given p covariates is
//! approximated by an affine combination `w0 + Σ w_j·m_j(x_j)` of
//! one-dimensional marginal quantile curves. The curves are estimated by
//! local linear check-loss smoothing ([`smoother`]); the weights by a
//! SCAD-penalized quantile regression on the fitted curves ([`solver`]),
//! with the penalty level chosen by a modified Schwarz criterion
//! ([`pipeline`]). [`simulation`] and [`bodyfat`] drive Monte Carlo and
//! random-split studies.

pub mod bodyfat;
pub mod data;
pub mod error;
pub mod io;
pub mod normal;
pub mod penalty;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod simulation;
pub mod smoother;
pub mod solver;
pub mod univariate;

pub use data::Dataset;
pub use error::{Error, ErrorKind, Result};
pub use pipeline::{fit, predict, AveragingModel, FitConfig, Method};
