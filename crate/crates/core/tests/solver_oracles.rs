//! Independent oracles for the weight solvers.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smaqp_core::penalty::{check_loss, ScadPenalty};
use smaqp_core::solver::{penalized_objective, solve_penalized_quantile, SolverOptions, WeightVector};
use smaqp_core::univariate::weighted_univariate_quantile_min;

/// Unpenalized quantile regression as a linear program:
/// min Σ τ·u_i + (1 − τ)·v_i  s.t.  w0 + M_i·w + u_i − v_i = y_i.
fn lp_quantile_objective(design: &[Vec<f64>], y: &[f64], tau: f64) -> f64 {
    let mut pb = Problem::new(OptimizationDirection::Minimize);
    let w0 = pb.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY));
    let w: Vec<_> = design.iter().map(|_| pb.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    for i in 0..y.len() {
        let u = pb.add_var(tau, (0.0, f64::INFINITY));
        let v = pb.add_var(1.0 - tau, (0.0, f64::INFINITY));
        let mut terms = vec![(w0, 1.0), (u, 1.0), (v, -1.0)];
        terms.extend(w.iter().zip(design).map(|(&wj, col)| (wj, col[i])));
        pb.add_constraint(&terms[..], ComparisonOp::Eq, y[i]);
    }
    pb.solve().expect("LP solvable").objective()
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
    let n = rng.gen_range(8..=50);
    let p = rng.gen_range(1..=5);
    let design: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
    let coef: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let y = (0..n)
        .map(|i| 1.0 + design.iter().zip(&coef).map(|(c, b)| c[i] * b).sum::<f64>() + rng.gen_range(-1.5f64..1.5).powi(3))
        .collect();
    (design, y, rng.gen_range(0.1..0.9))
}

#[test]
fn unpenalized_solver_matches_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let zero = ScadPenalty::new(0.0, 3.7).unwrap();
    for k in 0..100 {
        let (design, y, tau) = random_instance(&mut rng);
        let (w, rep) = solve_penalized_quantile(&design, &y, tau, &zero, &WeightVector::zeros(design.len()), &SolverOptions::default()).unwrap();
        let ours = penalized_objective(&design, &y, tau, &zero, &w);
        let lp = lp_quantile_objective(&design, &y, tau);
        assert!(ours <= lp + 1e-6, "instance {k}: ours {ours} lp {lp} converged {}", rep.converged);
    }
}

#[test]
fn unpenalized_solver_matches_lp_on_wider_designs() {
    // Sizes where plain coordinate sweeps used to exhaust the sweep budget.
    let mut rng = ChaCha8Rng::seed_from_u64(515);
    let zero = ScadPenalty::new(0.0, 3.7).unwrap();
    for k in 0..10 {
        let (n, p) = (200, 14);
        let design: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| design[0][i] - 0.5 * design[1][i] + design[2][i].powi(2) + rng.gen_range(-1.0f64..1.0).powi(3) * 3.0)
            .collect();
        let (w, rep) = solve_penalized_quantile(&design, &y, 0.5, &zero, &WeightVector::zeros(p), &SolverOptions::default()).unwrap();
        let ours = penalized_objective(&design, &y, 0.5, &zero, &w);
        let lp = lp_quantile_objective(&design, &y, 0.5);
        assert!(rep.converged, "instance {k} did not converge");
        assert!(ours <= lp + 1e-6, "instance {k}: ours {ours} lp {lp}");
    }
}

#[test]
fn univariate_update_matches_grid_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let grid = 1_000_000;
    for _ in 0..20 {
        let r: Vec<f64> = (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let d: Vec<f64> = (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let tau = rng.gen_range(0.05..0.95);
        let obj = |t: f64| r.iter().zip(&d).map(|(ri, di)| check_loss(ri - di * t, tau)).sum::<f64>() + 0.3 * t.abs();
        let t = weighted_univariate_quantile_min(&r, &d, tau, 0.3).unwrap();
        let mut best = f64::INFINITY;
        for k in 0..=grid {
            best = best.min(obj(-10.0 + 20.0 * k as f64 / grid as f64));
        }
        assert!(obj(t) <= best + 1e-12);
    }
}
