//! SCAD-penalized least squares, the mean-regression baseline.
//!
//! Columns are centered and scaled to unit mean square before fitting, the
//! penalty acts on the standardized coefficients, and results are mapped back
//! to the original scale.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_design, WeightVector};
use crate::error::{Error, Result};
use crate::penalty::ScadPenalty;
use crate::rng::{rng_for, Stream};

const LS_TOLERANCE: f64 = 1e-12;
const LS_MAX_SWEEPS: usize = 20_000;

struct Standardized {
    z: Vec<Vec<f64>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    y_mean: f64,
    yc: Vec<f64>,
}

fn standardize(design: &[Vec<f64>], y: &[f64]) -> Standardized {
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let mut means = Vec::with_capacity(design.len());
    let mut scales = Vec::with_capacity(design.len());
    let mut z = Vec::with_capacity(design.len());
    for col in design {
        let m = col.iter().sum::<f64>() / n;
        let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        means.push(m);
        scales.push(s);
        z.push(if s > 1e-12 * (1.0 + m.abs()) {
            col.iter().map(|v| (v - m) / s).collect()
        } else {
            vec![0.0; col.len()]
        });
    }
    Standardized {
        z,
        means,
        scales,
        y_mean,
        yc: y.iter().map(|v| v - y_mean).collect(),
    }
}

/// Minimizer of `(z − t)²/2 + p_λ(|t|)` (unit curvature).
fn scad_threshold(z: f64, pen: &ScadPenalty) -> f64 {
    let (l, a) = (pen.lambda(), pen.a());
    let soft = |v: f64, k: f64| v.signum() * (v.abs() - k).max(0.0);
    if z.abs() <= 2.0 * l {
        soft(z, l)
    } else if z.abs() <= a * l {
        soft(z, a * l / (a - 1.0)) / (1.0 - 1.0 / (a - 1.0))
    } else {
        z
    }
}

/// Coordinate descent on standardized data; `beta` is warm-started in place.
fn descend(s: &Standardized, pen: &ScadPenalty, beta: &mut [f64]) {
    let n = s.yc.len() as f64;
    let mut r: Vec<f64> = s.yc.clone();
    for (col, &b) in s.z.iter().zip(beta.iter()) {
        if b != 0.0 {
            r.iter_mut().zip(col).for_each(|(ri, zi)| *ri -= zi * b);
        }
    }
    for _ in 0..LS_MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for (j, col) in s.z.iter().enumerate() {
            if s.scales[j] == 0.0 || col.iter().all(|v| *v == 0.0) {
                beta[j] = 0.0;
                continue;
            }
            let zj = col.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n + beta[j];
            let new = scad_threshold(zj, pen);
            let delta = new - beta[j];
            if delta != 0.0 {
                r.iter_mut().zip(col).for_each(|(ri, zi)| *ri -= zi * delta);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < LS_TOLERANCE {
            break;
        }
    }
}

fn to_original(s: &Standardized, beta: &[f64]) -> WeightVector {
    let w: Vec<f64> = beta
        .iter()
        .zip(&s.scales)
        .map(|(b, sc)| if *sc > 0.0 && *b != 0.0 { b / sc } else { 0.0 })
        .collect();
    let w0 = s.y_mean - w.iter().zip(&s.means).map(|(w, m)| w * m).sum::<f64>();
    WeightVector { w0, w }
}

/// SCAD least squares `(1/2n)‖y − w0 − Mw‖² + Σ p_λ(|w̃_j|)` on the
/// standardized scale.
pub fn solve_penalized_least_squares(design: &[Vec<f64>], y: &[f64], pen: &ScadPenalty) -> Result<WeightVector> {
    check_design(design, y)?;
    if y.len() <= 2 {
        return Err(Error::InvalidInput(format!("need more than 2 observations, got {}", y.len())));
    }
    let s = standardize(design, y);
    let mut beta = vec![0.0; design.len()];
    descend(&s, pen, &mut beta);
    Ok(to_original(&s, &beta))
}

fn ls_lambda_max(s: &Standardized) -> f64 {
    let n = s.yc.len() as f64;
    s.z.iter()
        .map(|col| (col.iter().zip(&s.yc).map(|(a, b)| a * b).sum::<f64>() / n).abs())
        .fold(0.0, f64::max)
}

/// Path of solutions over `grid` (ascending), warm-started from the top.
fn path(s: &Standardized, grid: &[f64], a: f64) -> Result<Vec<WeightVector>> {
    let mut beta = vec![0.0; s.z.len()];
    let mut out = vec![None; grid.len()];
    for k in (0..grid.len()).rev() {
        descend(s, &ScadPenalty::new(grid[k], a)?, &mut beta);
        out[k] = Some(to_original(s, &beta));
    }
    Ok(out.into_iter().map(|w| w.expect("solved")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    /// Ascending.
    pub lambda_grid: Vec<f64>,
    /// Mean held-out squared error per λ.
    pub cv_errors: Vec<f64>,
    pub chosen_lambda: f64,
    pub chosen_weights: WeightVector,
}

/// K-fold cross-validation of the SCAD least-squares path. The grid spans
/// `grid_size` log-spaced points from the standardized λ_max down to
/// `λ_max·min_ratio`; ties go to the smaller λ.
pub fn select_lambda_cv(
    design: &[Vec<f64>],
    y: &[f64],
    grid_size: usize,
    min_ratio: f64,
    a: f64,
    folds: usize,
    seed: u64,
) -> Result<CvSelection> {
    check_design(design, y)?;
    let n = y.len();
    if folds < 2 || folds > n {
        return Err(Error::Config(format!("{folds} folds for {n} observations")));
    }
    let full = standardize(design, y);
    let lmax = ls_lambda_max(&full);
    let grid = if lmax > 0.0 {
        super::lambda_grid(lmax, grid_size.max(1), min_ratio)
    } else {
        vec![0.0]
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, Stream::CrossValidation, 0));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    let mut sse = vec![0.0; grid.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let sub_design: Vec<Vec<f64>> = design.iter().map(|c| train.iter().map(|&i| c[i]).collect()).collect();
        let sub_y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let fits = path(&standardize(&sub_design, &sub_y), &grid, a)?;
        for (k, w) in fits.iter().enumerate() {
            sse[k] += test
                .iter()
                .map(|&i| {
                    let row: Vec<f64> = design.iter().map(|c| c[i]).collect();
                    (y[i] - w.combine(&row)).powi(2)
                })
                .sum::<f64>();
        }
    }
    let cv_errors: Vec<f64> = sse.iter().map(|s| s / n as f64).collect();
    let mut best = 0;
    for k in 1..grid.len() {
        if cv_errors[k] < cv_errors[best] {
            best = k;
        }
    }
    let fits = path(&full, &grid[best..], a)?;
    Ok(CvSelection {
        chosen_lambda: grid[best],
        chosen_weights: fits[0].clone(),
        lambda_grid: grid,
        cv_errors,
    })
}
