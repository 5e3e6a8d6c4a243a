//! Finite-difference and closed-form verification of the penalty layer.

use approx::assert_relative_eq;
use nalgebra::{dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spaco::{
    inner_max_solve, make_linear, make_nonlinear, make_toy2d, penalized_grad, penalized_value,
    sampled_penalized_grad, value_function_grad, BoxSet, ConstrainedMinimaxProblem,
    ConstraintKind, InnerSolveOptions, NoiseDraw, PenaltyParams, ProblemParts,
};

fn benchmarks() -> Vec<ConstrainedMinimaxProblem> {
    vec![
        make_toy2d(),
        make_nonlinear(6, 0.8, 0).unwrap(),
        make_linear(5, 0.8, 3).unwrap(),
    ]
}

fn interior_point(
    problem: &ConstrainedMinimaxProblem,
    rng: &mut ChaCha8Rng,
) -> (DVector<f64>, DVector<f64>) {
    let shrink = |set: &BoxSet, z: DVector<f64>| {
        let c = set.center();
        &c + (z - &c) * 0.999
    };
    (
        shrink(problem.set_x(), problem.set_x().sample_uniform(rng)),
        shrink(problem.set_y(), problem.set_y().sample_uniform(rng)),
    )
}

#[test]
fn penalized_value_matches_direct_substitution_on_toy2d() {
    let problem = make_toy2d();
    let params = PenaltyParams::new(10.0, 0.0).unwrap();
    let x = dvector![-0.75, -0.75];
    let y = dvector![9.0 / 16.0, 9.0 / 16.0];
    // Constraint is exactly active, so the penalty vanishes and the value
    // is the raw objective: -27/64.
    assert_relative_eq!(
        penalized_value(&problem, &x, &y, &params),
        -27.0 / 64.0,
        max_relative = 1e-15
    );
}

#[test]
fn strictly_feasible_values_are_independent_of_rho() {
    let problem = make_toy2d();
    let x = dvector![0.5, 0.5];
    let y = dvector![-1.0, -2.0]; // e^T y - |x|^2 = -3.5 < 0
    let v1 = penalized_value(&problem, &x, &y, &PenaltyParams::new(1.0, 0.0).unwrap());
    let v2 = penalized_value(&problem, &x, &y, &PenaltyParams::new(1e6, 0.0).unwrap());
    assert_eq!(v1, v2);
}

#[test]
fn regularizer_is_linear_in_sigma() {
    let problem = make_toy2d();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (x, y) = interior_point(&problem, &mut rng);
        let v0 = penalized_value(&problem, &x, &y, &PenaltyParams::new(3.0, 0.0).unwrap());
        let v2 = penalized_value(&problem, &x, &y, &PenaltyParams::new(3.0, 2.0).unwrap());
        assert_eq!(v2, v0 - y.norm_squared());
    }
}

#[test]
fn penalized_gradient_matches_central_differences() {
    let step = 1e-6;
    let tol = 1e-5;
    for problem in &benchmarks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = PenaltyParams::new(7.0, 0.3).unwrap();
        for _ in 0..20 {
            let (x, y) = interior_point(problem, &mut rng);
            let (gx, gy) = penalized_grad(problem, &x, &y, &params);
            let fd_x = DVector::from_fn(x.len(), |i, _| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                (penalized_value(problem, &xp, &y, &params)
                    - penalized_value(problem, &xm, &y, &params))
                    / (2.0 * step)
            });
            let fd_y = DVector::from_fn(y.len(), |i, _| {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[i] += step;
                ym[i] -= step;
                (penalized_value(problem, &x, &yp, &params)
                    - penalized_value(problem, &x, &ym, &params))
                    / (2.0 * step)
            });
            let rel_x = (&gx - &fd_x).norm() / (1.0 + fd_x.norm());
            let rel_y = (&gy - &fd_y).norm() / (1.0 + fd_y.norm());
            assert!(
                rel_x <= tol && rel_y <= tol,
                "{}: FD mismatch rel_x={rel_x:.2e} rel_y={rel_y:.2e}",
                problem.name
            );
        }
    }
}

#[test]
fn penalized_problem_is_stationary_at_the_closed_form_point() {
    // At rho = 2 the stationary pair is x = -(3/4)e, y = 0.575 e: the
    // ascent gradient vanishes and the descent direction points out of the
    // box at the lower-bound corner.
    let problem = make_toy2d();
    let params = PenaltyParams::new(2.0, 0.0).unwrap();
    let x = dvector![-0.75, -0.75];
    let y_coeff = (10.0 + 18.0 * 2.0) / (16.0 + 32.0 * 2.0);
    assert_relative_eq!(y_coeff, 0.575, max_relative = 1e-15);
    let y = dvector![y_coeff, y_coeff];
    let (gx, gy) = penalized_grad(&problem, &x, &y, &params);
    assert!(gy.norm() <= 1e-14, "ascent gradient should vanish: {gy}");
    assert!(
        spaco::gen_grad_residual(&x, &gx, 0.1, problem.set_x()) <= 1e-14,
        "corner stationarity violated"
    );
}

#[test]
fn inner_solve_finds_the_closed_form_maximizer_on_toy2d() {
    let problem = make_toy2d();
    let params = PenaltyParams::new(5.0, 0.0).unwrap();
    let x = dvector![-0.75, -0.75];
    let report = inner_max_solve(
        &problem,
        &x,
        &params,
        &InnerSolveOptions {
            tol: 1e-10,
            ..Default::default()
        },
        None,
    )
    .unwrap();
    assert!(report.converged);
    let expect = 100.0 / 176.0;
    for i in 0..2 {
        assert_relative_eq!(report.y_star[i], expect, epsilon = 1e-8);
    }
}

#[test]
fn inner_solve_handles_an_unconstrained_regularized_quadratic() {
    // f = -||y - y0||^2 / 2 with no constraints: the sigma-regularized
    // maximizer is y0 / (1 + sigma).
    let y0 = dvector![1.5, -2.0, 0.25];
    let y0_f = y0.clone();
    let y0_g = y0.clone();
    let problem = ConstrainedMinimaxProblem::new(ProblemParts {
        name: "quadratic".into(),
        set_x: BoxSet::cube(1, -1.0, 1.0).unwrap(),
        set_y: BoxSet::cube(3, -10.0, 10.0).unwrap(),
        f: Box::new(move |_, y| -0.5 * (y - &y0_f).norm_squared()),
        grad_f: Box::new(move |x, y| (DVector::zeros(x.len()), -(y - &y0_g))),
        sample_grad: Box::new(|x, y, _| (DVector::zeros(x.len()), DVector::zeros(y.len()))),
        c: Box::new(|_, _| DVector::zeros(0)),
        c_jac: Box::new(|x, y| (DMatrix::zeros(0, x.len()), DMatrix::zeros(0, y.len()))),
        kinds: vec![],
        noise_dim: 0,
        noise_level: 0.0,
        reference: None,
    });
    let sigma = 0.7;
    let report = inner_max_solve(
        &problem,
        &dvector![0.0],
        &PenaltyParams::new(1.0, sigma).unwrap(),
        &InnerSolveOptions {
            tol: 1e-10,
            ..Default::default()
        },
        None,
    )
    .unwrap();
    assert!(report.converged);
    let expect = y0 / (1.0 + sigma);
    assert!((report.y_star - expect).norm() <= 1e-8);
}

#[test]
fn inner_solve_approaches_the_constrained_solution_as_rho_grows() {
    let problem = make_nonlinear(4, 0.0, 0).unwrap();
    let x = dvector![0.3, -0.2, 0.8, 0.1];
    let params = PenaltyParams::new(1e4, 0.0).unwrap();
    let report = inner_max_solve(
        &problem,
        &x,
        &params,
        &InnerSolveOptions {
            tol: 1e-6,
            ..Default::default()
        },
        None,
    )
    .unwrap();
    assert!(report.converged);
    let exact = problem.reference().unwrap().y_star_of(&x);
    assert!(
        (&report.y_star - &exact).norm() <= 1e-2,
        "distance {}",
        (&report.y_star - &exact).norm()
    );
}

#[test]
fn value_function_gradient_matches_differences_of_the_inner_solved_value() {
    let problem = make_toy2d();
    let params = PenaltyParams::new(20.0, 0.1).unwrap();
    let opts = InnerSolveOptions {
        tol: 1e-10,
        ..Default::default()
    };
    let phi = |x: &DVector<f64>| {
        inner_max_solve(&problem, x, &params, &opts, None)
            .unwrap()
            .value
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(-0.6..1.1));
        let g = value_function_grad(&problem, &x, &params, 1e-10, None).unwrap();
        let step = 1e-5;
        let fd = DVector::from_fn(2, |i, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += step;
            xm[i] -= step;
            (phi(&xp) - phi(&xm)) / (2.0 * step)
        });
        assert!(
            (&g - &fd).norm() / (1.0 + fd.norm()) <= 1e-4,
            "x = {x:?}: danskin {g:?} vs fd {fd:?}"
        );
    }
}

#[test]
fn value_function_gradient_converges_to_the_exact_one_in_rho() {
    // The toy problem has a closed-form value function; the smoothed
    // gradient approaches its gradient at rate O(1/rho). The constant is
    // fitted at rho = 100 and checked at larger weights.
    let problem = make_toy2d();
    let grad_exact = |x: &DVector<f64>| {
        let e = dvector![1.0, 1.0];
        let ex = e.dot(x);
        x / 4.0 + &e * ((x.norm_squared() - ex / 4.0) / 4.0) + (x * 2.0 - &e * 0.25) * (ex / 4.0)
    };
    let x = dvector![0.4, -0.3];
    let err_at = |rho: f64| {
        let g = value_function_grad(
            &problem,
            &x,
            &PenaltyParams::new(rho, 0.0).unwrap(),
            3e-10,
            None,
        )
        .unwrap();
        (g - grad_exact(&x)).norm()
    };
    let base = err_at(100.0);
    let fitted = 2.0 * base * 100.0;
    for rho in [1000.0, 10_000.0] {
        let err = err_at(rho);
        assert!(
            err <= fitted / rho,
            "rho = {rho}: error {err:.3e} above fitted bound {:.3e}",
            fitted / rho
        );
    }
    // Sanity for the fit itself: the error does decay.
    assert!(err_at(10_000.0) < base / 50.0);
}

#[test]
fn value_function_gradient_is_stationary_at_the_known_corner() {
    let problem = make_toy2d();
    let x = dvector![-0.75, -0.75];
    let g = value_function_grad(
        &problem,
        &x,
        &PenaltyParams::new(1e4, 0.0).unwrap(),
        1e-11,
        None,
    )
    .unwrap();
    // Stationarity at the lower-bound corner: the negated gradient lies in
    // the normal cone, so every component of g is nonnegative and the
    // projected residual vanishes.
    assert!(g.iter().all(|v| *v >= -1e-9), "g = {g:?}");
    assert!(spaco::gen_grad_residual(&x, &g, 0.1, problem.set_x()) <= 1e-9);
}

#[test]
fn inner_gradients_are_strongly_concave_with_the_regularizer() {
    for problem in &benchmarks() {
        let sigma = 0.1;
        let params = PenaltyParams::new(2.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let (x, _) = interior_point(problem, &mut rng);
            let y1 = problem.set_y().sample_uniform(&mut rng);
            let y2 = problem.set_y().sample_uniform(&mut rng);
            let (_, g1) = penalized_grad(problem, &x, &y1, &params);
            let (_, g2) = penalized_grad(problem, &x, &y2, &params);
            let lhs = (g1 - g2).dot(&(&y1 - &y2));
            let bound = -sigma * (&y1 - &y2).norm_squared();
            assert!(
                lhs <= bound + 1e-9 * (1.0 + bound.abs()),
                "{}: {lhs} > {bound}",
                problem.name
            );
        }
    }
}

#[test]
fn value_strictly_decreases_in_rho_when_violated() {
    let problem = make_toy2d();
    let x = dvector![0.1, 0.1];
    let y = dvector![2.0, 3.0]; // e^T y - |x|^2 = 4.98 > 0
    let v = |rho: f64| penalized_value(&problem, &x, &y, &PenaltyParams::new(rho, 0.0).unwrap());
    assert!(v(2.0) < v(1.0));
    assert!(v(4.0) < v(2.0));
}

#[test]
fn equality_penalty_is_half_rho_c_squared() {
    let problem = make_linear(4, 0.0, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (x, y) = interior_point(&problem, &mut rng);
    let rho = 13.0;
    let c = problem.c_value(&x, &y)[0];
    let with = penalized_value(&problem, &x, &y, &PenaltyParams::new(rho, 0.0).unwrap());
    let f = problem.f_value(&x, &y);
    assert_eq!(with, f - rho * (0.5 * c * c));
}

#[test]
fn penalized_inner_solutions_approach_feasibility_at_root_rho_rate() {
    let problem = make_toy2d();
    let x = dvector![0.2, -0.1];
    let violation_at = |rho: f64| {
        let report = inner_max_solve(
            &problem,
            &x,
            &PenaltyParams::new(rho, 0.0).unwrap(),
            &InnerSolveOptions {
                tol: 1e-10,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        let c = problem.c_value(&x, &report.y_star);
        c[0].max(0.0)
    };
    let fitted = 1.5 * violation_at(10.0) * 10f64.sqrt();
    for rho in [100.0, 1000.0, 10_000.0] {
        assert!(
            violation_at(rho) <= fitted / rho.sqrt(),
            "rho = {rho}: violation above K/sqrt(rho)"
        );
    }
}

#[test]
fn zero_noise_sampled_gradients_equal_the_deterministic_ones() {
    let problem = make_nonlinear(5, 0.0, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (x, y) = interior_point(&problem, &mut rng);
    let params = PenaltyParams::new(4.0, 0.2).unwrap();
    let draw = problem.draw_noise(&mut rng);
    let (sx, sy) = sampled_penalized_grad(&problem, &x, &y, &params, &draw);
    let (gx, gy) = penalized_grad(&problem, &x, &y, &params);
    assert_eq!(sx, gx);
    assert_eq!(sy, gy);
}

#[test]
fn sampled_gradients_are_unbiased_monte_carlo() {
    // Mean over many draws approaches the deterministic gradient at the
    // statistical rate.
    let problem = make_nonlinear(6, 1.0, 0).unwrap();
    let params = PenaltyParams::new(4.0, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (x, y) = interior_point(&problem, &mut rng);
    let n = 100_000usize;
    let mut mean_x = DVector::zeros(6);
    let mut mean_y = DVector::zeros(6);
    for _ in 0..n {
        let draw = problem.draw_noise(&mut rng);
        let (sx, sy) = sampled_penalized_grad(&problem, &x, &y, &params, &draw);
        mean_x += sx;
        mean_y += sy;
    }
    mean_x /= n as f64;
    mean_y /= n as f64;
    let (gx, gy) = penalized_grad(&problem, &x, &y, &params);
    let tol = 5.0 * problem.noise_level() / (n as f64).sqrt() * (12f64).sqrt();
    assert!((mean_x - gx).norm() <= tol);
    assert!((mean_y - gy).norm() <= tol);
}

#[test]
fn one_draw_supports_simultaneous_queries() {
    // The same draw evaluated at two points must reuse the same underlying
    // noise: for the matrix-noise problem the noise contribution is linear
    // in x for a fixed draw.
    let problem = make_linear(4, 1.0, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draw = problem.draw_noise(&mut rng);
    let y = DVector::zeros(8);
    let noise = |x: &DVector<f64>| {
        let (sx, _) = problem.sample_grad_f(x, &y, &draw);
        let (gx, _) = problem.grad_f(x, &y);
        sx - gx
    };
    let x1 = dvector![1.0, -2.0, 0.5, 3.0];
    let x2 = dvector![-0.5, 1.5, 2.0, -1.0];
    let lhs = noise(&(&x1 + &x2));
    let rhs = noise(&x1) + noise(&x2);
    assert!((lhs - rhs).norm() <= 1e-12);
    // And two evaluations with the same draw are bitwise identical.
    assert_eq!(noise(&x1), noise(&x1));
}

#[test]
fn custom_noise_draws_have_the_declared_dimension() {
    let problem = make_linear(3, 1.0, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(problem.draw_noise(&mut rng).len(), 9);
    let toy = make_toy2d();
    assert!(toy.draw_noise(&mut rng).is_empty());
    let _ = NoiseDraw::zero(4);
}

#[test]
fn constraint_kind_metadata_matches_the_benchmarks() {
    assert_eq!(make_toy2d().constraint_kinds(), [ConstraintKind::Inequality]);
    assert_eq!(
        make_linear(3, 0.0, 0).unwrap().constraint_kinds(),
        [ConstraintKind::Equality]
    );
}
