//! Estimation of the model-averaging weights.
//!
//! [`solve_penalized_quantile`] minimizes
//! `Σ_i ρ_τ(y_i − w0 − Σ_j M_ij·w_j) + n·Σ_j p_λ(|w_j|)` over the weights,
//! and [`select_lambda_msic`] picks λ by the modified Schwarz criterion. The
//! mean-regression baselines live in [`least_squares`].

pub mod least_squares;
mod msic;
mod quantile;

use serde::{Deserialize, Serialize};

pub use least_squares::{select_lambda_cv, solve_penalized_least_squares, CvSelection};
pub use msic::{lambda_grid, quantile_lambda_max, select_lambda_msic, MsicObjective, MsicSelection, MsicSettings};
pub use quantile::{penalized_objective, solve_penalized_quantile};

/// Weights with magnitude at or below this are reported as exact zeros.
pub const ZERO_THRESHOLD: f64 = 1e-8;

/// Intercept `w0` plus one weight per marginal model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w0: f64,
    pub w: Vec<f64>,
}

impl WeightVector {
    pub fn zeros(p: usize) -> Self {
        Self { w0: 0.0, w: vec![0.0; p] }
    }

    pub fn p(&self) -> usize {
        self.w.len()
    }

    /// One-based indices of nonzero weights; the intercept is never included.
    pub fn support(&self) -> Vec<usize> {
        self.w
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > ZERO_THRESHOLD)
            .map(|(j, _)| j + 1)
            .collect()
    }

    /// Number of nonzero weights, intercept excluded.
    pub fn df(&self) -> usize {
        self.w.iter().filter(|v| v.abs() > ZERO_THRESHOLD).count()
    }

    pub(crate) fn snap_zeros(&mut self) {
        for v in &mut self.w {
            if v.abs() <= ZERO_THRESHOLD {
                *v = 0.0;
            }
        }
    }

    /// `w0 + Σ_j w_j·row_j`.
    pub fn combine(&self, row: &[f64]) -> f64 {
        self.w0 + self.w.iter().zip(row).map(|(w, m)| w * m).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub final_objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when no coordinate moves more than this in a sweep.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_sweeps: 200 }
    }
}

pub(crate) fn check_design(design: &[Vec<f64>], y: &[f64]) -> crate::Result<()> {
    let n = y.len();
    if let Some((j, _)) = design.iter().enumerate().find(|(_, c)| c.len() != n) {
        return Err(crate::Error::InvalidInput(format!(
            "design column {} has the wrong length (expected {n})",
            j + 1
        )));
    }
    if let Some(i) = (0..n).find(|&i| !y[i].is_finite() || design.iter().any(|c| !c[i].is_finite())) {
        return Err(crate::Error::NonFinite { row: i });
    }
    Ok(())
}
