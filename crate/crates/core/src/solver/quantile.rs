//! SCAD-penalized quantile regression on a fixed design.
//!
//! Each sweep re-majorizes the SCAD penalty at the current weights by the
//! weighted L1 term `n·ṗ_λ(|w_j|)·|w_j|` (local linear approximation) and
//! runs one cyclic pass of exact coordinate minimizations. Coordinate descent
//! on a nonsmooth, non-separable objective can stall at a corner where no
//! single coordinate helps; when a pass stalls, simplex-style pivots along
//! the edges of the current vertex continue the descent until the convex
//! majorizer is certified optimal.

use nalgebra::DMatrix;

use super::{check_design, SolverOptions, SolverReport, WeightVector};
use crate::error::{check_tau, Error, Result};
use crate::penalty::{check_loss, ScadPenalty};
use crate::univariate::{argmin_interval, weighted_univariate_quantile_min, Hinge};

/// `Σ_i ρ_τ(y_i − w0 − Σ_j M_ij·w_j) + n·Σ_j p_λ(|w_j|)`.
pub fn penalized_objective(design: &[Vec<f64>], y: &[f64], tau: f64, pen: &ScadPenalty, weights: &WeightVector) -> f64 {
    let n = y.len();
    let loss: f64 = (0..n)
        .map(|i| {
            let fit = weights.w0 + design.iter().zip(&weights.w).map(|(c, w)| c[i] * w).sum::<f64>();
            check_loss(y[i] - fit, tau)
        })
        .sum();
    loss + n as f64 * weights.w.iter().map(|w| pen.value(w.abs())).sum::<f64>()
}

struct State<'a> {
    design: &'a [Vec<f64>],
    y: &'a [f64],
    tau: f64,
    w0: f64,
    w: Vec<f64>,
    r: Vec<f64>,
    /// Residuals with magnitude below this count as interpolated.
    eps: f64,
}

impl<'a> State<'a> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn p(&self) -> usize {
        self.w.len()
    }

    fn column(&self, k: usize) -> Option<&'a [f64]> {
        if k == 0 {
            None
        } else {
            Some(&self.design[k - 1])
        }
    }

    fn coord(&self, k: usize) -> f64 {
        if k == 0 {
            self.w0
        } else {
            self.w[k - 1]
        }
    }

    fn set_coord(&mut self, k: usize, v: f64) {
        if k == 0 {
            self.w0 = v;
        } else {
            self.w[k - 1] = v;
        }
    }

    fn refresh_residuals(&mut self) {
        for i in 0..self.n() {
            let fit = self.w0 + self.design.iter().zip(&self.w).map(|(c, w)| c[i] * w).sum::<f64>();
            self.r[i] = self.y[i] - fit;
        }
    }

    fn majorizer(&self, c: &[f64]) -> f64 {
        self.r.iter().map(|&u| check_loss(u, self.tau)).sum::<f64>()
            + c.iter().zip(&self.w).map(|(ci, wi)| ci * wi.abs()).sum::<f64>()
    }

    /// One-sided derivatives at the current point of the convex majorizer
    /// along direction `(d0, d)` whose row images are `u`.
    fn directional(&self, u: &[f64], d: &[f64], c: &[f64]) -> (f64, f64) {
        let tau = self.tau;
        let (mut plus, mut minus) = (0.0, 0.0);
        for (&ri, &ui) in self.r.iter().zip(u) {
            if ui == 0.0 {
                continue;
            }
            if ri > self.eps {
                plus -= tau * ui;
                minus -= tau * ui;
            } else if ri < -self.eps {
                plus += (1.0 - tau) * ui;
                minus += (1.0 - tau) * ui;
            } else {
                let (pos, neg) = (ui.max(0.0), (-ui).max(0.0));
                plus += (1.0 - tau) * pos + tau * neg;
                minus -= tau * pos + (1.0 - tau) * neg;
            }
        }
        for ((&cj, &wj), &dj) in c.iter().zip(&self.w).zip(d) {
            if cj == 0.0 || dj == 0.0 {
                continue;
            }
            if wj != 0.0 {
                plus += cj * wj.signum() * dj;
                minus += cj * wj.signum() * dj;
            } else {
                plus += cj * dj.abs();
                minus -= cj * dj.abs();
            }
        }
        (plus, minus)
    }

    /// Exact minimization over coordinate `k` (0 is the intercept).
    /// Returns the absolute change.
    fn update_coordinate(&mut self, k: usize, ck: f64) -> Result<f64> {
        let n = self.n();
        let ones;
        let col: &[f64] = match self.column(k) {
            Some(c) => c,
            None => {
                ones = vec![1.0; n];
                &ones
            }
        };
        let p = self.p();
        let mut dvec = vec![0.0; p];
        let mut cvec = vec![0.0; p];
        if k > 0 {
            dvec[k - 1] = 1.0;
            cvec[k - 1] = ck;
        }
        let (plus, minus) = self.directional(col, &dvec, &cvec);
        let scale = col.iter().map(|v| v.abs()).sum::<f64>() + ck;
        if plus >= -1e-12 * scale && minus <= 1e-12 * scale {
            return Ok(0.0);
        }
        let old = self.coord(k);
        let partial: Vec<f64> = self.r.iter().zip(col).map(|(r, d)| r + d * old).collect();
        let new = weighted_univariate_quantile_min(&partial, col, self.tau, ck)?;
        let before = self.majorizer_terms_coordinate(k, ck, old, col, &partial);
        let after = self.majorizer_terms_coordinate(k, ck, new, col, &partial);
        if !(after < before) {
            return Ok(0.0);
        }
        self.set_coord(k, new);
        for (r, (pr, d)) in self.r.iter_mut().zip(partial.iter().zip(col)) {
            *r = pr - d * new;
        }
        Ok((new - old).abs())
    }

    fn majorizer_terms_coordinate(&self, _k: usize, ck: f64, v: f64, col: &[f64], partial: &[f64]) -> f64 {
        partial.iter().zip(col).map(|(r, d)| check_loss(r - d * v, self.tau)).sum::<f64>() + ck * v.abs()
    }

    fn row_image(&self, d0: f64, d: &[f64]) -> Vec<f64> {
        let mut u = vec![d0; self.n()];
        for (col, &dj) in self.design.iter().zip(d) {
            if dj != 0.0 {
                for (ui, &m) in u.iter_mut().zip(col) {
                    *ui += m * dj;
                }
            }
        }
        u
    }

    /// Exact line search of the majorizer along `(d0, d)`. With `to_kink`,
    /// a flat optimum still moves to the nearest kink so that a new
    /// constraint becomes active. Returns whether the point moved.
    fn line_search(&mut self, d0: f64, d: &[f64], c: &[f64], to_kink: bool) -> bool {
        let u = self.row_image(d0, d);
        let mut hinges: Vec<Hinge> = self
            .r
            .iter()
            .zip(&u)
            .filter(|(_, &ui)| ui != 0.0)
            .map(|(&ri, &ui)| Hinge::check(ri, ui, 1.0, self.tau))
            .collect();
        for ((&cj, &wj), &dj) in c.iter().zip(&self.w).zip(d) {
            if cj > 0.0 && dj != 0.0 {
                hinges.push(Hinge::absolute(-wj / dj, cj * dj.abs()));
            }
        }
        if hinges.is_empty() {
            return false;
        }
        let (lo, hi) = argmin_interval(&mut hinges);
        let mut t = 0.0f64.clamp(lo, hi);
        if t == 0.0 && to_kink {
            t = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => {
                    if lo.abs() <= hi.abs() {
                        lo
                    } else {
                        hi
                    }
                }
                (true, false) => lo,
                (false, true) => hi,
                (false, false) => 0.0,
            };
        }
        if t == 0.0 || !t.is_finite() {
            return false;
        }
        let before = self.majorizer(c);
        let saved = (self.w0, self.w.clone(), self.r.clone());
        self.w0 += t * d0;
        let wmax = self.w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (wj, &dj) in self.w.iter_mut().zip(d) {
            *wj += t * dj;
            if wj.abs() <= 1e-13 * (1.0 + wmax + (t * dj).abs()) {
                *wj = 0.0;
            }
        }
        for (ri, &ui) in self.r.iter_mut().zip(&u) {
            *ri -= t * ui;
        }
        let after = self.majorizer(c);
        if after > before + 1e-12 * (1.0 + before.abs()) || (!to_kink && after >= before) {
            (self.w0, self.w, self.r) = saved;
            return false;
        }
        true
    }

    /// One simplex-style move on the convex majorizer. Returns false when no
    /// edge of the current vertex is a descent direction.
    fn pivot(&mut self, c: &[f64]) -> bool {
        let dim = self.p() + 1;
        // Active constraint normals: zero penalized weights, then
        // interpolated rows.
        let mut normals: Vec<Vec<f64>> = Vec::new();
        for (j, (&wj, &cj)) in self.w.iter().zip(c).enumerate() {
            if wj == 0.0 && cj > 0.0 {
                let mut e = vec![0.0; dim];
                e[j + 1] = 1.0;
                normals.push(e);
            }
        }
        for i in 0..self.n() {
            if self.r[i].abs() <= self.eps {
                let mut a = Vec::with_capacity(dim);
                a.push(1.0);
                a.extend(self.design.iter().map(|col| col[i]));
                normals.push(a);
            }
        }
        // Greedy independent subset with an orthonormal basis of its span.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut chosen: Vec<Vec<f64>> = Vec::new();
        for a in normals {
            if chosen.len() == dim {
                break;
            }
            let norm = dot(&a, &a).sqrt();
            let mut v = a.clone();
            for q in &basis {
                let proj = dot(&v, q);
                axpy(&mut v, -proj, q);
            }
            let rest = dot(&v, &v).sqrt();
            if rest > 1e-9 * norm {
                v.iter_mut().for_each(|x| *x /= rest);
                basis.push(v);
                chosen.push(a);
            }
        }

        if chosen.len() < dim {
            // Not a vertex: the objective is linear along the orthogonal
            // complement of the active normals; follow it to the next kink.
            let mut best: Option<Vec<f64>> = None;
            let mut best_norm = 0.0;
            for k in 0..dim {
                let mut v = vec![0.0; dim];
                v[k] = 1.0;
                for q in &basis {
                    let proj = dot(&v, q);
                    axpy(&mut v, -proj, q);
                }
                let nv = dot(&v, &v).sqrt();
                if nv > best_norm {
                    best_norm = nv;
                    best = Some(v);
                }
            }
            return match best {
                Some(d) if best_norm > 1e-9 => self.line_search(d[0], &d[1..], c, true),
                _ => false,
            };
        }

        let n_mat = DMatrix::from_fn(dim, dim, |i, j| chosen[i][j]);
        let Some(inv) = n_mat.try_inverse() else {
            return false;
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for k in 0..dim {
            let d: Vec<f64> = (0..dim).map(|i| inv[(i, k)]).collect();
            let u = self.row_image(d[0], &d[1..]);
            let (plus, minus) = self.directional(&u, &d[1..], c);
            let norm = dot(&d, &d).sqrt();
            let scale = 1e-10 * (u.iter().map(|v| v.abs()).sum::<f64>() + c.iter().sum::<f64>() * norm + 1e-300);
            // Descent along +d if plus < 0, along −d if minus > 0.
            for (rate, sign) in [(plus, 1.0), (-minus, -1.0)] {
                if rate < -scale {
                    let score = rate / norm;
                    if best.as_ref().map_or(true, |(s, _)| score < *s) {
                        best = Some((score, d.iter().map(|v| v * sign).collect()));
                    }
                }
            }
        }
        match best {
            Some((_, d)) => self.line_search(d[0], &d[1..], c, false),
            None => false,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Minimizes the SCAD-penalized check-loss objective starting from `init`.
///
/// Never fails on non-convergence: the best iterate is returned with
/// `converged = false`.
pub fn solve_penalized_quantile(
    design: &[Vec<f64>],
    y: &[f64],
    tau: f64,
    pen: &ScadPenalty,
    init: &WeightVector,
    opts: &SolverOptions,
) -> Result<(WeightVector, SolverReport)> {
    check_tau(tau)?;
    check_design(design, y)?;
    let n = y.len();
    if n <= 2 {
        return Err(Error::InvalidInput(format!("need more than 2 observations, got {n}")));
    }
    if init.p() != design.len() {
        return Err(Error::InvalidInput(format!(
            "initial weights have {} entries for {} columns",
            init.p(),
            design.len()
        )));
    }
    let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut st = State {
        design,
        y,
        tau,
        w0: init.w0,
        w: init.w.clone(),
        r: vec![0.0; n],
        eps: 1e-9 * scale,
    };
    st.refresh_residuals();
    let nf = n as f64;
    let p = design.len();
    let current = |st: &State| WeightVector { w0: st.w0, w: st.w.clone() };

    let mut trace = vec![penalized_objective(design, y, tau, pen, &current(&st))];
    let mut converged = false;
    let mut sweeps = 0;
    let pivot_cap = 50 * (p + 1) + 100;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let c: Vec<f64> = st.w.iter().map(|w| nf * pen.derivative(w.abs())).collect();
        let mut max_change = 0.0f64;
        for k in 0..=p {
            let ck = if k == 0 { 0.0 } else { c[k - 1] };
            max_change = max_change.max(st.update_coordinate(k, ck)?);
        }
        // Coordinate steps can zigzag along a ridge in ever smaller moves
        // that stay above the tolerance, so pivots run after every sweep.
        let mut moved = false;
        for _ in 0..pivot_cap {
            if !st.pivot(&c) {
                break;
            }
            moved = true;
        }
        let stalled = max_change < opts.tolerance && !moved;
        st.refresh_residuals();
        let obj = penalized_objective(design, y, tau, pen, &current(&st));
        trace.push(obj);
        if stalled {
            converged = true;
            break;
        }
    }

    let mut weights = current(&st);
    weights.snap_zeros();
    let final_objective = penalized_objective(design, y, tau, pen, &weights);
    Ok((
        weights,
        SolverReport {
            objective_trace: trace,
            sweeps,
            converged,
            final_objective,
        },
    ))
}
