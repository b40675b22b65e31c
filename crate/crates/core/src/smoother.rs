//! Local linear estimation of one-dimensional marginal regression functions.
//!
//! Each covariate gets its own fit of the response on that covariate alone,
//! either the τ-th conditional quantile (check loss) or the conditional mean
//! (least squares), with an Epanechnikov kernel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_tau, Error, Result};
use crate::normal;
use crate::penalty::check_loss;
use crate::univariate::{argmin_interval, Hinge};

/// Number of times the bandwidth is doubled locally before a fit gives up.
pub const MAX_BANDWIDTH_DOUBLINGS: u32 = 5;

/// `K(u) = 0.75·(1 − u²)₊`.
#[inline]
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// A kernel weight at a standardized distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEval {
    pub u: f64,
    pub weight: f64,
}

impl KernelEval {
    pub fn at(u: f64) -> Self {
        Self { u, weight: epanechnikov(u) }
    }
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Normal-reference least-squares bandwidth `1.06·sd(x)·n^(−1/5)`.
pub fn pilot_bandwidth(x: &[f64]) -> Result<f64> {
    if x.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "pilot bandwidth needs at least 10 points, got {}",
            x.len()
        )));
    }
    let sd = sample_sd(x);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::ZeroVariance);
    }
    Ok(1.06 * sd * (x.len() as f64).powf(-0.2))
}

/// Epanechnikov constant of the local linear rule of thumb.
const ROT_CONSTANT_EPANECHNIKOV: f64 = 1.719;

/// Rule-of-thumb bandwidth for local linear least squares: a global quartic
/// pilot supplies the residual variance and the curvature `m''`, and
/// `h = 1.719·{σ²·range / Σ m''(x_i)²}^(1/5)`.
///
/// Capped at ten times the covariate range, where the fit is already a
/// global straight line.
pub fn rot_bandwidth(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 10 || y.len() != n {
        return Err(Error::InvalidInput(format!(
            "rule-of-thumb bandwidth needs at least 10 paired points, got {n}"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = sample_sd(x);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::ZeroVariance);
    }
    // Standardized powers keep the pilot design well conditioned.
    let z: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();
    let design = nalgebra::DMatrix::from_fn(n, 5, |i, k| z[i].powi(k as i32));
    let rhs = nalgebra::DVector::from_column_slice(y);
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::InvalidInput(format!("rule-of-thumb pilot fit failed: {e}")))?;
    let rss = (&design * &coef - &rhs).norm_squared();
    let sigma2 = rss / (n - 5) as f64;
    let curvature: f64 = z
        .iter()
        .map(|&t| (2.0 * coef[2] + 6.0 * coef[3] * t + 12.0 * coef[4] * t * t) / (sd * sd))
        .map(|c| c * c)
        .sum();
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    let cap = 10.0 * range;
    if !(sigma2 > 0.0) {
        // An exact quartic leaves no noise to smooth against.
        return Ok(pilot_bandwidth(x)?.min(cap));
    }
    let h = ROT_CONSTANT_EPANECHNIKOV * (sigma2 * range / curvature).powf(0.2);
    Ok(if h.is_finite() { h.min(cap) } else { cap })
}

/// How the least-squares pilot bandwidth `h_ls` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotRule {
    /// `1.06·sd(x)·n^(−1/5)`, a function of the covariate alone.
    NormalReference,
    /// Quartic-pilot rule of thumb for local linear regression.
    #[default]
    LocalLinearRot,
}

impl PilotRule {
    pub fn bandwidth(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            PilotRule::NormalReference => pilot_bandwidth(x),
            PilotRule::LocalLinearRot => rot_bandwidth(x, y),
        }
    }
}

/// Density exponent in the quantile bandwidth adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileScaling {
    /// `{τ(1 − τ)/φ(Φ⁻¹(τ))²}^(1/5)`, the normal-reference ratio of the
    /// asymptotically optimal quantile and mean bandwidths.
    #[default]
    SquaredDensity,
    /// `{τ(1 − τ)/φ(Φ⁻¹(τ))}^(1/5)`.
    Density,
}

/// Quantile adjustment of a least-squares bandwidth, `h = h_ls·ratio`.
pub fn quantile_bandwidth(h_ls: f64, tau: f64, scaling: QuantileScaling) -> Result<f64> {
    check_tau(tau)?;
    if !(h_ls > 0.0) || !h_ls.is_finite() {
        return Err(Error::InvalidInput(format!("bandwidth {h_ls} must be positive")));
    }
    let density = normal::pdf(normal::quantile(tau));
    let denom = match scaling {
        QuantileScaling::SquaredDensity => density * density,
        QuantileScaling::Density => density,
    };
    Ok(h_ls * (tau * (1.0 - tau) / denom).powf(0.2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPlan {
    pub h_ls: f64,
    pub h: f64,
    pub tau: f64,
}

impl BandwidthPlan {
    pub fn with_pilot(h_ls: f64, tau: f64, scaling: QuantileScaling) -> Result<Self> {
        Ok(Self { h_ls, h: quantile_bandwidth(h_ls, tau, scaling)?, tau })
    }

    /// Default pilot rule and scaling for covariate `x` and response `y`.
    pub fn for_covariate(x: &[f64], y: &[f64], tau: f64) -> Result<Self> {
        Self::with_pilot(PilotRule::default().bandwidth(x, y)?, tau, QuantileScaling::default())
    }
}

/// Which marginal functional is being smoothed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalLoss {
    Quantile { tau: f64 },
    Mean,
}

/// How a fitted marginal is evaluated between training points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Solve the local problem afresh at the new point.
    #[default]
    Refit,
    /// Linear interpolation of the stored training-point fits.
    Interpolate,
}

/// Level and slope of a local linear fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFit {
    pub level: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Copy)]
struct LocalPoint {
    z: f64,
    y: f64,
    w: f64,
}

/// Points with positive kernel weight; `xs` must be sorted ascending.
fn window(xs: &[f64], ys: &[f64], h: f64, x0: f64, out: &mut Vec<LocalPoint>) {
    out.clear();
    let start = xs.partition_point(|&v| v <= x0 - h);
    for k in start..xs.len() {
        let z = xs[k] - x0;
        if z >= h {
            break;
        }
        let w = epanechnikov(z / h);
        if w > 0.0 {
            out.push(LocalPoint { z, y: ys[k], w });
        }
    }
}

fn unsorted_window(x: &[f64], y: &[f64], h: f64, x0: f64) -> Vec<LocalPoint> {
    x.iter()
        .zip(y)
        .filter_map(|(&xi, &yi)| {
            let z = xi - x0;
            let w = epanechnikov(z / h);
            (w > 0.0).then_some(LocalPoint { z, y: yi, w })
        })
        .collect()
}

fn has_two_distinct(pts: &[LocalPoint]) -> bool {
    pts.iter().any(|p| p.z != pts[0].z)
}

fn local_objective(pts: &[LocalPoint], tau: f64, a: f64, b: f64) -> f64 {
    pts.iter().map(|p| p.w * check_loss(p.y - a - b * p.z, tau)).sum()
}

/// Exact weighted two-parameter quantile fit by vertex rotation.
///
/// A basic solution interpolates two points. Holding one interpolated point
/// fixed, the objective along the pencil of lines through it is a convex
/// piecewise-linear function of the slope and is minimized exactly. The
/// iteration alternates the pivot point and stops when neither line through
/// the current vertex improves, which for a convex piecewise-linear function
/// of two variables certifies a global minimum.
fn solve_local_quantile(pts: &[LocalPoint], tau: f64, x0: f64) -> Result<LocalFit> {
    if pts.len() < 2 || !has_two_distinct(pts) {
        return Err(Error::BandwidthTooSmall { x0 });
    }

    let mut hinges: Vec<Hinge> = pts
        .iter()
        .map(|p| Hinge { at: p.y, left: tau * p.w, right: (1.0 - tau) * p.w })
        .collect();
    let (lo, hi) = argmin_interval(&mut hinges);
    let a0 = if lo.is_finite() { lo } else { hi };
    let mut pivot = pts.iter().position(|p| p.y == a0).expect("weighted quantile is a data point");
    let mut b = 0.0;
    let mut obj = local_objective(pts, tau, pts[pivot].y, b);
    let mut at_vertex = false;
    let mut optimal_lines = 0;
    let mut ats = vec![f64::NAN; pts.len()];

    let max_iter = 20 * pts.len() + 100;
    for _ in 0..max_iter {
        let pp = pts[pivot];
        hinges.clear();
        for (i, p) in pts.iter().enumerate() {
            let dz = p.z - pp.z;
            if i == pivot || dz == 0.0 {
                ats[i] = f64::NAN;
                continue;
            }
            let h = Hinge::check(p.y - pp.y, dz, p.w, tau);
            ats[i] = h.at;
            hinges.push(h);
        }
        if hinges.is_empty() {
            break;
        }
        let (lo, hi) = argmin_interval(&mut hinges);
        let inside = lo <= b && b <= hi;
        if inside && at_vertex {
            optimal_lines += 1;
            if optimal_lines >= 2 {
                break;
            }
            // Swap to the other interpolated point of the vertex.
            if let Some(q) = other_vertex_point(pts, pivot, b) {
                pivot = q;
                continue;
            }
            break;
        }
        let target = if inside {
            // Not yet at a vertex: move to the nearest kink without loss.
            if lo.is_finite() && (b - lo).abs() <= (hi - b).abs() || !hi.is_finite() {
                lo
            } else {
                hi
            }
        } else {
            b.clamp(lo, hi)
        };
        let q = ats.iter().position(|&v| v == target).expect("minimizer is a kink");
        let a = pp.y - target * pp.z;
        let new_obj = local_objective(pts, tau, a, target);
        if inside || new_obj < obj {
            b = target;
            obj = new_obj.min(obj);
            pivot = q;
            at_vertex = true;
            optimal_lines = 1;
        } else {
            break;
        }
    }
    let level = pts[pivot].y - b * pts[pivot].z;
    Ok(LocalFit { level, slope: b })
}

fn other_vertex_point(pts: &[LocalPoint], pivot: usize, b: f64) -> Option<usize> {
    let pp = pts[pivot];
    let a = pp.y - b * pp.z;
    let scale = pts.iter().map(|p| p.y.abs()).fold(1.0, f64::max);
    pts.iter()
        .enumerate()
        .filter(|&(i, p)| i != pivot && p.z != pp.z)
        .map(|(i, p)| (i, (p.y - a - b * p.z).abs()))
        .filter(|&(_, r)| r <= 1e-9 * scale)
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(i, _)| i)
}

fn solve_local_mean(pts: &[LocalPoint], x0: f64) -> Result<LocalFit> {
    if pts.len() < 2 {
        return Err(Error::BandwidthTooSmall { x0 });
    }
    let s0: f64 = pts.iter().map(|p| p.w).sum();
    let zbar = pts.iter().map(|p| p.w * p.z).sum::<f64>() / s0;
    let ybar = pts.iter().map(|p| p.w * p.y).sum::<f64>() / s0;
    let szz: f64 = pts.iter().map(|p| p.w * (p.z - zbar).powi(2)).sum();
    let scale: f64 = pts.iter().map(|p| p.w * p.z * p.z).sum();
    if !(szz > 1e-14 * scale) {
        return Err(Error::SingularLocalDesign { x0 });
    }
    let szy: f64 = pts.iter().map(|p| p.w * (p.z - zbar) * (p.y - ybar)).sum();
    let slope = szy / szz;
    Ok(LocalFit { level: ybar - slope * zbar, slope })
}

/// Minimizes `Σ ρ_τ{y_i − a − b(x_i − x0)}·K((x_i − x0)/h)` exactly.
pub fn fit_local_linear_quantile(x: &[f64], y: &[f64], tau: f64, h: f64, x0: f64) -> Result<LocalFit> {
    check_tau(tau)?;
    check_inputs(x, y, h, x0)?;
    solve_local_quantile(&unsorted_window(x, y, h, x0), tau, x0)
}

/// Kernel-weighted least-squares local linear fit.
pub fn fit_local_linear_mean(x: &[f64], y: &[f64], h: f64, x0: f64) -> Result<LocalFit> {
    check_inputs(x, y, h, x0)?;
    solve_local_mean(&unsorted_window(x, y, h, x0), x0)
}

fn check_inputs(x: &[f64], y: &[f64], h: f64, x0: f64) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("{} covariate values for {} responses", x.len(), y.len())));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("bandwidth {h} must be positive")));
    }
    if !x0.is_finite() {
        return Err(Error::InvalidInput(format!("evaluation point {x0} is not finite")));
    }
    Ok(())
}

fn fit_sorted(xs: &[f64], ys: &[f64], loss: LocalLoss, h: f64, x0: f64, buf: &mut Vec<LocalPoint>) -> Result<LocalFit> {
    let mut bw = h;
    let mut last = Err(Error::BandwidthTooSmall { x0 });
    for _ in 0..=MAX_BANDWIDTH_DOUBLINGS {
        window(xs, ys, bw, x0, buf);
        last = match loss {
            LocalLoss::Quantile { tau } => solve_local_quantile(buf, tau, x0),
            LocalLoss::Mean => solve_local_mean(buf, x0),
        };
        match last {
            Err(Error::BandwidthTooSmall { .. }) | Err(Error::SingularLocalDesign { .. }) => bw *= 2.0,
            _ => return last,
        }
    }
    last
}

/// A fitted marginal curve `m̂_j` that can be evaluated anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    /// One-based covariate index.
    pub covariate_index: usize,
    pub loss: LocalLoss,
    pub bandwidth: f64,
    pub eval_mode: EvalMode,
    /// Sorted training covariate values.
    pub knots: Vec<f64>,
    /// Training responses aligned with `knots`; needed to refit at new points.
    pub responses: Vec<f64>,
    pub fitted_levels: Vec<f64>,
    pub fitted_slopes: Vec<f64>,
    pub support: (f64, f64),
}

impl MarginalModel {
    /// Fits the marginal at every training point.
    pub fn fit(covariate_index: usize, x: &[f64], y: &[f64], loss: LocalLoss, bandwidth: f64) -> Result<(Self, Vec<f64>)> {
        if let LocalLoss::Quantile { tau } = loss {
            check_tau(tau)?;
        }
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidInput("marginal fit needs equally long, nonempty x and y".into()));
        }
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
        let knots: Vec<f64> = order.iter().map(|&i| x[i]).collect();
        let responses: Vec<f64> = order.iter().map(|&i| y[i]).collect();

        let mut levels = vec![0.0; knots.len()];
        let mut slopes = vec![0.0; knots.len()];
        let mut buf = Vec::new();
        let mut k = 0;
        while k < knots.len() {
            let fit = fit_sorted(&knots, &responses, loss, bandwidth, knots[k], &mut buf)?;
            let mut e = k;
            while e < knots.len() && knots[e] == knots[k] {
                levels[e] = fit.level;
                slopes[e] = fit.slope;
                e += 1;
            }
            k = e;
        }
        let mut in_sample = vec![0.0; x.len()];
        for (pos, &i) in order.iter().enumerate() {
            in_sample[i] = levels[pos];
        }
        let support = (knots[0], knots[knots.len() - 1]);
        Ok((
            Self {
                covariate_index,
                loss,
                bandwidth,
                eval_mode: EvalMode::Refit,
                knots,
                responses,
                fitted_levels: levels,
                fitted_slopes: slopes,
                support,
            },
            in_sample,
        ))
    }

    pub fn evaluate(&self, x_new: f64) -> Result<f64> {
        if !x_new.is_finite() {
            return Err(Error::InvalidInput(format!(
                "covariate {}: non-finite evaluation point {x_new}",
                self.covariate_index
            )));
        }
        let (lo, hi) = self.support;
        let last = self.knots.len() - 1;
        if x_new < lo {
            return Ok(self.fitted_levels[0] + self.fitted_slopes[0] * (x_new - lo));
        }
        if x_new > hi {
            return Ok(self.fitted_levels[last] + self.fitted_slopes[last] * (x_new - hi));
        }
        let pos = self.knots.partition_point(|&v| v < x_new);
        if self.knots[pos] == x_new {
            return Ok(self.fitted_levels[pos]);
        }
        match self.eval_mode {
            EvalMode::Refit => {
                let mut buf = Vec::new();
                fit_sorted(&self.knots, &self.responses, self.loss, self.bandwidth, x_new, &mut buf)
                    .map(|f| f.level)
                    .map_err(|e| Error::Covariate { index: self.covariate_index, source: Box::new(e) })
            }
            EvalMode::Interpolate => {
                let (x0, x1) = (self.knots[pos - 1], self.knots[pos]);
                let (y0, y1) = (self.fitted_levels[pos - 1], self.fitted_levels[pos]);
                Ok(y0 + (y1 - y0) * (x_new - x0) / (x1 - x0))
            }
        }
    }
}

pub fn evaluate_marginal(model: &MarginalModel, x_new: f64) -> Result<f64> {
    model.evaluate(x_new)
}

/// The p marginal models plus the n x p in-sample fit matrix, by column.
#[derive(Debug, Clone)]
pub struct MarginalFits {
    pub models: Vec<MarginalModel>,
    pub design: Vec<Vec<f64>>,
}

/// Quantile marginals use `plan.h` at level `taus[j]`; mean marginals use
/// `plan.h_ls`.
pub fn build_marginal_models(
    data: &Dataset,
    taus: &[f64],
    plans: &[BandwidthPlan],
    mean_loss: bool,
    eval_mode: EvalMode,
) -> Result<MarginalFits> {
    let p = data.p();
    if plans.len() != p || (!mean_loss && taus.len() != p) {
        return Err(Error::InvalidInput(format!(
            "bandwidth plan covers {} of {p} covariates",
            plans.len()
        )));
    }
    let fitted: Vec<Result<(MarginalModel, Vec<f64>)>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let (loss, h) = if mean_loss {
                (LocalLoss::Mean, plans[j].h_ls)
            } else {
                (LocalLoss::Quantile { tau: taus[j] }, plans[j].h)
            };
            MarginalModel::fit(j + 1, data.column(j), data.response(), loss, h)
                .map(|(mut m, col)| {
                    m.eval_mode = eval_mode;
                    (m, col)
                })
                .map_err(|e| Error::Covariate { index: j + 1, source: Box::new(e) })
        })
        .collect();
    let mut models = Vec::with_capacity(p);
    let mut design = Vec::with_capacity(p);
    for r in fitted {
        let (m, col) = r?;
        models.push(m);
        design.push(col);
    }
    Ok(MarginalFits { models, design })
}
