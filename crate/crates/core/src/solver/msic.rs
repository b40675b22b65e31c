use serde::{Deserialize, Serialize};

use super::{check_design, penalized_objective, solve_penalized_quantile, SolverOptions, SolverReport, WeightVector};
use crate::error::{check_tau, Error, Result};
use crate::penalty::ScadPenalty;

/// Which objective enters the logarithm of the criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsicObjective {
    /// Check loss of the fit alone, as in the classical quantile SIC.
    #[default]
    CheckLoss,
    /// Check loss plus the SCAD term at the current λ.
    Penalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsicSettings {
    pub c_n: f64,
    pub scad_a: f64,
    pub objective: MsicObjective,
}

impl MsicSettings {
    pub fn new(c_n: f64, scad_a: f64) -> Self {
        Self { c_n, scad_a, objective: MsicObjective::default() }
    }
}

/// Outcome of choosing λ by `MSIC(λ) = log Q_n(ŵ) + df·C_n·log(n)/(2n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsicSelection {
    /// Ascending.
    pub lambda_grid: Vec<f64>,
    pub msic_values: Vec<f64>,
    pub df_per_lambda: Vec<usize>,
    pub chosen_lambda: f64,
    pub chosen_weights: WeightVector,
    pub chosen_report: SolverReport,
    pub c_n: f64,
    pub objective: MsicObjective,
}

/// Smallest λ that keeps every weight at zero:
/// `max_j |n⁻¹ Σ_i M_ij·ψ_τ(y_i − q̂_τ(y))|`.
pub fn quantile_lambda_max(design: &[Vec<f64>], y: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let q = crate::univariate::weighted_univariate_quantile_min(y, &vec![1.0; y.len()], tau, 0.0)?;
    let n = y.len() as f64;
    let psi: Vec<f64> = y.iter().map(|&v| if v - q < 0.0 { tau - 1.0 } else { tau }).collect();
    Ok(design
        .iter()
        .map(|col| (col.iter().zip(&psi).map(|(m, s)| m * s).sum::<f64>() / n).abs())
        .fold(0.0, f64::max))
}

/// `size` log-spaced values from `lambda_max·min_ratio` up to `lambda_max`,
/// ascending.
pub fn lambda_grid(lambda_max: f64, size: usize, min_ratio: f64) -> Vec<f64> {
    if size == 1 {
        return vec![lambda_max];
    }
    let (lo, hi) = ((lambda_max * min_ratio).ln(), lambda_max.ln());
    (0..size).map(|k| (lo + (hi - lo) * k as f64 / (size - 1) as f64).exp()).collect()
}

/// Solves along `grid` (warm-started from the largest λ down) and returns the
/// λ minimizing MSIC; ties go to the smaller λ.
pub fn select_lambda_msic(
    design: &[Vec<f64>],
    y: &[f64],
    tau: f64,
    grid: &[f64],
    settings: &MsicSettings,
    opts: &SolverOptions,
) -> Result<MsicSelection> {
    let MsicSettings { c_n, scad_a: a, objective } = *settings;
    check_tau(tau)?;
    check_design(design, y)?;
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) || grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Config("lambda grid must be nonnegative and ascending".into()));
    }
    if !(c_n > 0.0) {
        return Err(Error::Config(format!("C_n = {c_n} must be positive")));
    }
    let n = y.len() as f64;
    // An interpolating fit leaves rounding-level residuals, not exact zeros.
    let floor = 1e-12 * n * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut results: Vec<Option<(f64, usize, WeightVector, SolverReport)>> = vec![None; grid.len()];
    let mut warm = WeightVector::zeros(design.len());
    for k in (0..grid.len()).rev() {
        let pen = ScadPenalty::new(grid[k], a)?;
        let (w, report) = solve_penalized_quantile(design, y, tau, &pen, &warm, opts)?;
        let q = match objective {
            MsicObjective::Penalized => report.final_objective,
            MsicObjective::CheckLoss => penalized_objective(design, y, tau, &ScadPenalty::new(0.0, a)?, &w),
        };
        if !(q > floor) {
            return Err(Error::DegenerateObjective(q));
        }
        let df = w.df();
        let msic = q.ln() + df as f64 * c_n * n.ln() / (2.0 * n);
        warm = w.clone();
        results[k] = Some((msic, df, w, report));
    }
    let results: Vec<_> = results.into_iter().map(|r| r.expect("every grid point solved")).collect();
    let mut best = 0;
    for k in 1..results.len() {
        if results[k].0 < results[best].0 {
            best = k;
        }
    }
    let (_, _, chosen_weights, chosen_report) = results[best].clone();
    Ok(MsicSelection {
        lambda_grid: grid.to_vec(),
        msic_values: results.iter().map(|r| r.0).collect(),
        df_per_lambda: results.iter().map(|r| r.1).collect(),
        chosen_lambda: grid[best],
        chosen_weights,
        chosen_report,
        c_n,
        objective,
    })
}
