//! Analytic references and construction invariants of the bundled
//! benchmark problems.

use approx::assert_relative_eq;
use nalgebra::{dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spaco::{
    check_oracle_consistency, classify_basin, make_linear, make_nonlinear, make_toy2d,
    BasinClass, BoxSet, ConstrainedMinimaxProblem, ConstraintKind, ProblemParts,
};

#[test]
fn toy2d_reference_identities() {
    let problem = make_toy2d();
    let r = problem.reference().unwrap();
    assert_eq!(r.x_star, dvector![-0.75, -0.75]);
    assert_eq!(r.y_star, dvector![0.5625, 0.5625]);
    // y*(x*) recovers y*.
    assert!((r.y_star_of(&r.x_star) - &r.y_star).norm() <= 1e-15);
    // The coupled constraint is active at the solution.
    let c = problem.c_value(&r.x_star, &r.y_star);
    assert!(c[0].abs() <= 1e-15);
    // Value function at the spurious point and consistency of its two
    // forms: the closed expression and f evaluated at the inner solution.
    assert_eq!(r.phi_value(&DVector::zeros(2)).unwrap(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(-0.75..1.25));
        let via_formula = r.phi_value(&x).unwrap();
        let via_inner = problem.f_value(&x, &r.y_star_of(&x));
        assert_relative_eq!(via_formula, via_inner, epsilon = 1e-12);
    }
}

#[test]
fn nonlinear_reduces_to_toy2d_in_two_dimensions() {
    let toy = make_toy2d();
    let gen = make_nonlinear(2, 0.0, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(-0.75..1.25));
        let y = DVector::from_fn(2, |_, _| rng.random_range(-10.0..10.0));
        assert_relative_eq!(
            toy.f_value(&x, &y),
            gen.f_value(&x, &y),
            epsilon = 1e-12
        );
        let (tgx, tgy) = toy.grad_f(&x, &y);
        let (ggx, ggy) = gen.grad_f(&x, &y);
        assert!((tgx - ggx).norm() <= 1e-12);
        assert!((tgy - ggy).norm() <= 1e-12);
    }
}

#[test]
fn nonlinear_inner_solution_is_nine_sixteenths_at_the_solution_for_any_n() {
    for n in [1usize, 3, 7, 100] {
        let problem = make_nonlinear(n, 0.0, 0).unwrap();
        let r = problem.reference().unwrap();
        let y = r.y_star_of(&r.x_star);
        for i in 0..n {
            assert_relative_eq!(y[i], 9.0 / 16.0, epsilon = 1e-15);
        }
    }
}

#[test]
fn nonlinear_rejects_degenerate_sizes() {
    assert!(make_nonlinear(0, 1.0, 0).is_err());
    assert!(make_nonlinear(4, -1.0, 0).is_err());
}

/// Brute-force inner maximization: iteratively refined grid search over the
/// feasible set, used as an independent oracle for the closed-form inner
/// solutions at small dimensions.
fn grid_search_inner_max(
    problem: &ConstrainedMinimaxProblem,
    x: &DVector<f64>,
    rounds: usize,
) -> DVector<f64> {
    let m = problem.dim_y();
    let mut lo = problem.set_y().lower().clone();
    let mut hi = problem.set_y().upper().clone();
    let per_axis = 13usize;
    let mut best = problem.set_y().center();
    for _ in 0..rounds {
        let mut best_val = f64::NEG_INFINITY;
        let mut best_point = best.clone();
        let mut idx = vec![0usize; m];
        loop {
            let y = DVector::from_fn(m, |i, _| {
                lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / (per_axis - 1) as f64
            });
            let c = problem.c_value(x, &y);
            let feasible = problem
                .constraint_kinds()
                .iter()
                .zip(c.iter())
                .all(|(kind, ci)| match kind {
                    ConstraintKind::Inequality => *ci <= 1e-12,
                    ConstraintKind::Equality => ci.abs() <= 1e-9,
                });
            if feasible {
                let v = problem.f_value(x, &y);
                if v > best_val {
                    best_val = v;
                    best_point = y;
                }
            }
            // Advance the mixed-radix counter.
            let mut dim = 0;
            loop {
                if dim == m {
                    break;
                }
                idx[dim] += 1;
                if idx[dim] < per_axis {
                    break;
                }
                idx[dim] = 0;
                dim += 1;
            }
            if dim == m {
                break;
            }
        }
        best = best_point;
        // Zoom in around the winner.
        let step = DVector::from_fn(m, |i, _| (hi[i] - lo[i]) / (per_axis - 1) as f64);
        for i in 0..m {
            lo[i] = (best[i] - step[i]).max(problem.set_y().lower()[i]);
            hi[i] = (best[i] + step[i]).min(problem.set_y().upper()[i]);
        }
    }
    best
}

#[test]
fn closed_form_inner_solutions_agree_with_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in [1usize, 2, 3] {
        let problem = make_nonlinear(n, 0.0, 0).unwrap();
        let r = problem.reference().unwrap();
        for _ in 0..3 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-0.75..1.25));
            let exact = r.y_star_of(&x);
            let brute = grid_search_inner_max(&problem, &x, 6);
            assert!(
                (&exact - &brute).norm() <= 5e-3,
                "n={n}: grid {brute:?} vs exact {exact:?}"
            );
            // The active constraint holds with equality at the exact inner
            // solution (the unconstrained maximizer is infeasible on X).
            let c = problem.c_value(&x, &exact);
            assert!(c[0].abs() <= 1e-12);
        }
    }
}

#[test]
fn linear_reference_satisfies_the_equality_and_stationarity() {
    let problem = make_linear(8, 0.5, 11).unwrap();
    let r = problem.reference().unwrap();
    // The constraint holds exactly at the reference by construction.
    let c = problem.c_value(&r.x_star, &r.y_star);
    assert!(c[0].abs() <= 1e-10, "c = {}", c[0]);
    // The inner gradients match the equality multiplier at any x: the
    // Lagrangian y-gradient with mu = -1 vanishes at (y1*(x), y2*(x)).
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let x = DVector::from_fn(8, |_, _| rng.random_range(-10.0..10.0));
        let y = r.y_star_of(&x);
        let (_, gy) = problem.grad_f(&x, &y);
        let (_, jy) = problem.c_jacobians(&x, &y);
        let lagr = gy - jy.transpose() * dvector![-1.0];
        assert!(lagr.norm() <= 1e-10, "Lagrangian y-gradient {lagr:?}");
    }
    // Value function closed form agrees with f at the inner solution.
    for _ in 0..5 {
        let x = DVector::from_fn(8, |_, _| rng.random_range(-5.0..5.0));
        let via_formula = r.phi_value(&x).unwrap();
        let via_inner = problem.f_value(&x, &r.y_star_of(&x));
        assert_relative_eq!(via_formula, via_inner, epsilon = 1e-9);
    }
}

#[test]
fn linear_one_dimensional_solution_matches_scalar_arithmetic() {
    let seed = 77;
    let problem = make_linear(1, 0.0, seed).unwrap();
    // Reproduce the generator: A = m^2 + 1, x* = -2 / (A + 1).
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m: f64 = rng.sample(rand_distr::StandardNormal);
    let a = m * m + 1.0;
    let expect = -2.0 / (a + 1.0);
    let r = problem.reference().unwrap();
    assert_relative_eq!(r.x_star[0], expect, epsilon = 1e-14);
    assert_relative_eq!(r.y_star[0], expect + 1.0, epsilon = 1e-14);
    assert_relative_eq!(r.y_star[1], -2.0 * expect - 1.0, epsilon = 1e-14);
}

#[test]
fn generated_problems_are_deterministic_per_seed() {
    let a = make_linear(6, 1.0, 42).unwrap();
    let b = make_linear(6, 1.0, 42).unwrap();
    let c = make_linear(6, 1.0, 43).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = DVector::from_fn(6, |_, _| rng.random_range(-5.0..5.0));
    let y = DVector::from_fn(12, |_, _| rng.random_range(-5.0..5.0));
    assert_eq!(a.f_value(&x, &y), b.f_value(&x, &y));
    assert_eq!(
        a.reference().unwrap().x_star,
        b.reference().unwrap().x_star
    );
    assert_ne!(a.f_value(&x, &y), c.f_value(&x, &y));
}

#[test]
fn basin_classification_examples() {
    let problem = make_toy2d();
    let r = problem.reference().unwrap();
    let (class, errors) = classify_basin(&problem, &r.x_star, &r.y_star, 0.1).unwrap();
    assert_eq!(class, BasinClass::TrueSolution);
    assert_eq!(errors.e_opt, 0.0);

    let (class, errors) =
        classify_basin(&problem, &DVector::zeros(2), &DVector::zeros(2), 0.1).unwrap();
    assert_eq!(class, BasinClass::Spurious);
    assert_eq!(errors.e_spur, 0.0);

    let mid_x = (&r.x_star + DVector::zeros(2)) / 2.0;
    let mid_y = (&r.y_star + DVector::zeros(2)) / 2.0;
    let (class, _) = classify_basin(&problem, &mid_x, &mid_y, 0.1).unwrap();
    assert_eq!(class, BasinClass::Neither);

    // A problem without spurious registration refuses to classify.
    let linear = make_linear(2, 0.0, 0).unwrap();
    assert!(classify_basin(&linear, &DVector::zeros(2), &DVector::zeros(4), 0.1).is_err());
}

#[test]
fn sampled_gradient_means_converge_statistically() {
    // ||mean of N sampled gradients - exact gradient|| stays within
    // 5 * delta / sqrt(N) * sqrt(dim) at a fixed point, per benchmark.
    let n_draws = 100_000usize;
    let check = |problem: &ConstrainedMinimaxProblem, x: &DVector<f64>, y: &DVector<f64>| {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut mx = DVector::zeros(problem.dim_x());
        let mut my = DVector::zeros(problem.dim_y());
        for _ in 0..n_draws {
            let draw = problem.draw_noise(&mut rng);
            let (sx, sy) = problem.sample_grad_f(x, y, &draw);
            mx += sx;
            my += sy;
        }
        mx /= n_draws as f64;
        my /= n_draws as f64;
        let (gx, gy) = problem.grad_f(x, y);
        let dim = (problem.dim_x() + problem.dim_y()) as f64;
        let tol = 5.0 * problem.noise_level() / (n_draws as f64).sqrt() * dim.sqrt();
        // Floor covers pure summation roundoff over n_draws terms.
        let dev = (mx - gx).norm().max((my - gy).norm());
        assert!(
            dev <= tol.max(1e-9),
            "{}: deviation {dev:.3e} above {tol:.3e}",
            problem.name
        );
    };

    let toy = make_toy2d();
    check(&toy, &dvector![0.3, -0.2], &dvector![0.5, 0.5]);

    let nl = make_nonlinear(50, 1.0, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = DVector::from_fn(50, |_, _| rng.random_range(-0.75..1.25));
    let y = DVector::from_fn(50, |_, _| rng.random_range(-1.0..1.0));
    check(&nl, &x, &y);

    let lin = make_linear(50, 1.0, 8).unwrap();
    let x = DVector::from_fn(50, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(100, |_, _| rng.random_range(-1.0..1.0));
    check(&lin, &x, &y);
}

#[test]
fn oracle_checker_accepts_the_benchmarks() {
    for problem in [
        make_toy2d(),
        make_nonlinear(5, 0.5, 0).unwrap(),
        make_linear(4, 0.5, 2).unwrap(),
    ] {
        let report = check_oracle_consistency(&problem, 20, 1e-6, 1e-5, 7);
        assert!(report.passed(), "{}: {}", problem.name, report.summary());
        if problem.noise_level() == 0.0 {
            assert_eq!(report.sample_vs_det_err, Some(0.0));
        }
    }
}

#[test]
fn oracle_checker_localizes_a_wrong_jacobian() {
    // toy2d with the sign of dc/dx flipped: only the jac_x block blows up.
    let good = make_toy2d();
    let bad = ConstrainedMinimaxProblem::new(ProblemParts {
        name: "broken".into(),
        set_x: BoxSet::cube(2, -0.75, 1.25).unwrap(),
        set_y: BoxSet::cube(2, -10.0, 10.0).unwrap(),
        f: Box::new({
            move |x: &DVector<f64>, y: &DVector<f64>| {
                (0.5 * x.norm_squared() - 1.0).powi(2)
                    - 0.5 * (y - DVector::from_element(2, 1.0)).norm_squared()
                    + 0.5 * x.dot(y)
            }
        }),
        grad_f: Box::new(|x, y| {
            let e = DVector::from_element(2, 1.0);
            (
                x * (2.0 * (0.5 * x.norm_squared() - 1.0)) + y * 0.5,
                -(y - e) + x * 0.5,
            )
        }),
        sample_grad: Box::new(|x, y, _| {
            let e = DVector::from_element(2, 1.0);
            (
                x * (2.0 * (0.5 * x.norm_squared() - 1.0)) + y * 0.5,
                -(y - e) + x * 0.5,
            )
        }),
        c: Box::new(|x, y| DVector::from_element(1, y.sum() - x.norm_squared())),
        c_jac: Box::new(|x, y| {
            // Sign error in the x-block.
            (
                DMatrix::from_fn(1, x.len(), |_, j| 2.0 * x[j]),
                DMatrix::from_element(1, y.len(), 1.0),
            )
        }),
        kinds: vec![ConstraintKind::Inequality],
        noise_dim: 0,
        noise_level: 0.0,
        reference: None,
    });
    let good_report = check_oracle_consistency(&good, 20, 1e-6, 1e-5, 7);
    let bad_report = check_oracle_consistency(&bad, 20, 1e-6, 1e-5, 7);
    assert!(good_report.passed());
    assert!(!bad_report.passed());
    assert!(bad_report.jac_x_err.0 > 1e-2, "error should localize in jac_x");
    assert!(bad_report.grad_x_err.0 <= 1e-5);
    assert!(bad_report.grad_y_err.0 <= 1e-5);
    assert!(bad_report.jac_y_err.0 <= 1e-5);
}
