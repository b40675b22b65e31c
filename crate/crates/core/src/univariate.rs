//! Exact minimization of one-dimensional convex piecewise-linear functions.
//!
//! Every line search in the crate (local linear quantile fits, coordinate
//! updates, pivot moves of the penalized solver) reduces to minimizing a sum
//! of hinges `left·(at − t)₊ + right·(t − at)₊`. A minimizer always sits at a
//! kink, so sorting the kinks and walking the cumulative slope is exact.

use crate::error::{check_tau, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Hinge {
    pub at: f64,
    pub left: f64,
    pub right: f64,
}

impl Hinge {
    #[cfg(test)]
    pub fn value(&self, t: f64) -> f64 {
        if t < self.at {
            self.left * (self.at - t)
        } else {
            self.right * (t - self.at)
        }
    }

    /// The term `weight·ρ_τ(r − d·t)`; `d` must be nonzero.
    #[inline]
    pub fn check(r: f64, d: f64, weight: f64, tau: f64) -> Hinge {
        let at = r / d;
        let s = weight * d.abs();
        if d > 0.0 {
            Hinge { at, left: s * tau, right: s * (1.0 - tau) }
        } else {
            Hinge { at, left: s * (1.0 - tau), right: s * tau }
        }
    }

    /// The term `weight·|t − at|`.
    #[inline]
    pub fn absolute(at: f64, weight: f64) -> Hinge {
        Hinge { at, left: weight, right: weight }
    }
}

#[cfg(test)]
pub(crate) fn total_value(hinges: &[Hinge], t: f64) -> f64 {
    hinges.iter().map(|h| h.value(t)).sum()
}

/// Closed interval of minimizers of `Σ hinges`. Endpoints may be infinite
/// when the function is flat towards that side. Reorders `hinges`.
pub(crate) fn argmin_interval(hinges: &mut [Hinge]) -> (f64, f64) {
    if hinges.is_empty() {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    hinges.sort_unstable_by(|a, b| a.at.total_cmp(&b.at));
    let total_left: f64 = hinges.iter().map(|h| h.left).sum();
    let total_right: f64 = hinges.iter().map(|h| h.right).sum();
    let tol = 1e-13 * (total_left + total_right);

    let mut slope = -total_left;
    let mut lo = if slope >= -tol { Some(f64::NEG_INFINITY) } else { None };
    let mut k = 0;
    while k < hinges.len() {
        let at = hinges[k].at;
        let mut jump = 0.0;
        while k < hinges.len() && hinges[k].at == at {
            jump += hinges[k].left + hinges[k].right;
            k += 1;
        }
        slope += jump;
        match lo {
            None => {
                if slope > tol {
                    return (at, at);
                }
                if slope >= -tol {
                    lo = Some(at);
                }
            }
            Some(l) => {
                if slope > tol {
                    return (l, at);
                }
            }
        }
    }
    (lo.unwrap_or(f64::INFINITY), f64::INFINITY)
}

/// Minimizer of `Σ hinges` closest to `anchor`.
pub(crate) fn argmin_near(hinges: &mut [Hinge], anchor: f64) -> f64 {
    let (lo, hi) = argmin_interval(hinges);
    anchor.clamp(lo, hi)
}

/// Exact minimizer of `δ ↦ Σ_i ρ_τ(r_i − d_i·δ) + l1_weight·|δ|`.
///
/// Among several minimizers the one closest to zero is returned.
pub fn weighted_univariate_quantile_min(
    residuals: &[f64],
    multipliers: &[f64],
    tau: f64,
    l1_weight: f64,
) -> Result<f64> {
    check_tau(tau)?;
    if residuals.len() != multipliers.len() {
        return Err(Error::InvalidInput(format!(
            "{} residuals for {} multipliers",
            residuals.len(),
            multipliers.len()
        )));
    }
    if l1_weight < 0.0 || !l1_weight.is_finite() {
        return Err(Error::InvalidInput(format!("l1 weight {l1_weight} must be finite and nonnegative")));
    }
    let mut hinges: Vec<Hinge> = residuals
        .iter()
        .zip(multipliers)
        .filter(|(_, &d)| d != 0.0)
        .map(|(&r, &d)| Hinge::check(r, d, 1.0, tau))
        .collect();
    if hinges.is_empty() {
        return Err(Error::DeadCoordinate);
    }
    if l1_weight > 0.0 {
        hinges.push(Hinge::absolute(0.0, l1_weight));
    }
    Ok(argmin_near(&mut hinges, 0.0))
}
