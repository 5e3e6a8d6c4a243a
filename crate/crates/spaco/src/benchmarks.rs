//! Synthetic benchmark problems with analytic references, and the
//! basin-of-attraction classification rule.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::problem::{
    AnalyticReference, BoxSet, ConstrainedMinimaxProblem, ConstraintKind, ProblemParts,
    StationaryPoint,
};

fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

/// Two-dimensional deterministic problem with one coupled inequality
/// constraint `e^T y - ||x||^2 <= 0`.
///
/// Its stationarity system has two solutions: the true one at
/// `(-3/4 e, 9/16 e)` with multiplier `1/16`, and a spurious one at the
/// origin with multiplier `1`. The constraint is active on the whole of
/// `X`, so the exact inner solution and the value function are available in
/// closed form.
pub fn make_toy2d() -> ConstrainedMinimaxProblem {
    let n = 2;
    let e = ones(n);
    let set_x = BoxSet::cube(n, -0.75, 1.25).expect("valid bounds");
    let set_y = BoxSet::cube(n, -10.0, 10.0).expect("valid bounds");

    let f = move |x: &DVector<f64>, y: &DVector<f64>| -> f64 {
        let e = ones(x.len());
        (0.5 * x.norm_squared() - 1.0).powi(2) - 0.5 * (y - &e).norm_squared() + 0.5 * x.dot(y)
    };
    let grad = move |x: &DVector<f64>, y: &DVector<f64>| {
        let e = ones(x.len());
        let gx = x * (2.0 * (0.5 * x.norm_squared() - 1.0)) + y * 0.5;
        let gy = -(y - &e) + x * 0.5;
        (gx, gy)
    };
    let grad_for_sample = grad;

    let reference = AnalyticReference {
        x_star: &e * -0.75,
        y_star: &e * (9.0 / 16.0),
        lambda_star: Some(DVector::from_element(1, 1.0 / 16.0)),
        y_star_of: Box::new(|x: &DVector<f64>| {
            let e = ones(x.len());
            let a = (2.0 * x.norm_squared() - e.dot(x)) / 4.0;
            &e * a + x * 0.5
        }),
        spurious_points: vec![StationaryPoint {
            x: DVector::zeros(n),
            y: DVector::zeros(n),
            lambda: DVector::from_element(1, 1.0),
        }],
        phi_value: Some(Box::new(|x: &DVector<f64>| {
            let e = ones(x.len());
            let ex = e.dot(x);
            x.norm_squared() / 8.0 + (ex / 4.0) * (x.norm_squared() - ex / 4.0)
        })),
    };

    ConstrainedMinimaxProblem::new(ProblemParts {
        name: "toy2d".into(),
        set_x,
        set_y,
        f: Box::new(f),
        grad_f: Box::new(grad),
        sample_grad: Box::new(move |x, y, _draw| grad_for_sample(x, y)),
        c: Box::new(coupling_constraint),
        c_jac: Box::new(coupling_jacobians),
        kinds: vec![ConstraintKind::Inequality],
        noise_dim: 0,
        noise_level: 0.0,
        reference: Some(reference),
    })
}

fn coupling_constraint(x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    DVector::from_element(1, y.sum() - x.norm_squared())
}

fn coupling_jacobians(x: &DVector<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let jx = DMatrix::from_fn(1, x.len(), |_, j| -2.0 * x[j]);
    let jy = DMatrix::from_element(1, y.len(), 1.0);
    (jx, jy)
}

/// The n-dimensional stochastic extension of [`make_toy2d`]: objective
/// `(n/2)(||x||^2/n - 1)^2 - ||y - e||^2/2 + x^T(y + w)/2` in expectation
/// over `w ~ N(0, delta^2 I)`, same coupled constraint. The noise enters
/// the sampled gradient only through the x-block, as `w / 2`.
///
/// The `seed` parameter is accepted for constructor uniformity; this
/// problem's data is deterministic.
pub fn make_nonlinear(n: usize, delta: f64, _seed: u64) -> Result<ConstrainedMinimaxProblem> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if delta < 0.0 {
        return Err(Error::InvalidParameter("noise level must be nonnegative".into()));
    }
    let e = ones(n);
    let set_x = BoxSet::cube(n, -0.75, 1.25)?;
    let set_y = BoxSet::cube(n, -10.0, 10.0)?;

    let nf = n as f64;
    let f = move |x: &DVector<f64>, y: &DVector<f64>| -> f64 {
        let e = ones(x.len());
        0.5 * nf * (x.norm_squared() / nf - 1.0).powi(2) - 0.5 * (y - &e).norm_squared()
            + 0.5 * x.dot(y)
    };
    let grad = move |x: &DVector<f64>, y: &DVector<f64>| {
        let e = ones(x.len());
        let gx = x * (2.0 * (x.norm_squared() / nf - 1.0)) + y * 0.5;
        let gy = -(y - &e) + x * 0.5;
        (gx, gy)
    };
    let sample = move |x: &DVector<f64>, y: &DVector<f64>, draw: &crate::problem::NoiseDraw| {
        let (mut gx, gy) = grad(x, y);
        gx += draw.values() * (0.5 * delta);
        (gx, gy)
    };

    let nf_ref = nf;
    let reference = AnalyticReference {
        x_star: &e * -0.75,
        y_star: &e * (9.0 / 16.0),
        lambda_star: Some(DVector::from_element(1, 1.0 / 16.0)),
        y_star_of: Box::new(move |x: &DVector<f64>| {
            let e = ones(x.len());
            let a = (2.0 * x.norm_squared() - e.dot(x)) / (2.0 * nf_ref);
            &e * a + x * 0.5
        }),
        spurious_points: vec![StationaryPoint {
            x: DVector::zeros(n),
            y: DVector::zeros(n),
            lambda: DVector::from_element(1, 1.0),
        }],
        phi_value: None,
    };

    Ok(ConstrainedMinimaxProblem::new(ProblemParts {
        name: format!("nonlinear(n={n}, delta={delta})"),
        set_x,
        set_y,
        f: Box::new(f),
        grad_f: Box::new(grad),
        sample_grad: Box::new(sample),
        c: Box::new(coupling_constraint),
        c_jac: Box::new(coupling_jacobians),
        kinds: vec![ConstraintKind::Inequality],
        noise_dim: n,
        noise_level: delta,
        reference: Some(reference),
    }))
}

/// Stochastic quadratic problem with one linear equality constraint
/// `e^T x + e^T y1 + e^T y2 = 0`, where `y = (y1, y2)` and the quadratic
/// form matrix is `A = (1/n) M M^T + I` with `M` entries drawn `N(0, 1)`
/// from `seed`. The gradient noise is a fresh Gaussian matrix `W` with
/// entries `N(0, delta^2)` entering the x-block as `(W + W^T)/2 x`, the
/// exact differential of the quadratic form.
pub fn make_linear(n: usize, delta: f64, seed: u64) -> Result<ConstrainedMinimaxProblem> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if delta < 0.0 {
        return Err(Error::InvalidParameter("noise level must be nonnegative".into()));
    }
    let e = ones(n);
    let set_x = BoxSet::cube(n, -10.0, 10.0)?;
    let set_y = BoxSet::cube(2 * n, -20.0, 20.0)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let m: DMatrix<f64> =
        DMatrix::from_fn(n, n, |_, _| rand::Rng::sample(&mut rng, StandardNormal));
    let a_bar = &m * m.transpose() / (n as f64) + DMatrix::<f64>::identity(n, n);

    // x* = -2 (A + I)^{-1} e; A + I is positive definite by construction.
    let a_plus_i = &a_bar + DMatrix::<f64>::identity(n, n);
    let x_star: DVector<f64> = a_plus_i
        .clone()
        .cholesky()
        .expect("A + I is positive definite")
        .solve(&(&e * -2.0));

    let a_f = a_bar.clone();
    let f = move |x: &DVector<f64>, y: &DVector<f64>| -> f64 {
        let n = x.len();
        let e = ones(n);
        let y1 = y.rows(0, n).into_owned();
        let y2 = y.rows(n, n).into_owned();
        let q = 0.5 * x.dot(&(&a_f * x));
        let inner =
            0.5 * y1.norm_squared() - x.dot(&y1) + e.dot(&y2) + 0.5 * (&y2 + x * 2.0 + &e).norm_squared();
        q - inner
    };

    let a_g = a_bar.clone();
    let grad = move |x: &DVector<f64>, y: &DVector<f64>| {
        let n = x.len();
        let e = ones(n);
        let y1 = y.rows(0, n).into_owned();
        let y2 = y.rows(n, n).into_owned();
        let shifted = &y2 + x * 2.0 + &e;
        let gx = &a_g * x + &y1 - &shifted * 2.0;
        let gy1 = x - &y1;
        let gy2 = -&e - &shifted;
        let mut gy = DVector::zeros(2 * n);
        gy.rows_mut(0, n).copy_from(&gy1);
        gy.rows_mut(n, n).copy_from(&gy2);
        (gx, gy)
    };

    let grad_s = grad.clone();
    let sample = move |x: &DVector<f64>, y: &DVector<f64>, draw: &crate::problem::NoiseDraw| {
        let n = x.len();
        let (mut gx, gy) = grad_s(x, y);
        // (W + W^T)/2 x with W = delta * Z, Z row-major in the draw.
        let z = draw.values();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += (z[i * n + j] + z[j * n + i]) * x[j];
            }
            gx[i] += 0.5 * delta * acc;
        }
        (gx, gy)
    };

    let y_star = {
        let mut v = DVector::zeros(2 * n);
        v.rows_mut(0, n).copy_from(&(&x_star + &e));
        v.rows_mut(n, n).copy_from(&(-&x_star * 2.0 - &e));
        v
    };

    let a_phi = a_plus_i.clone();
    let reference = AnalyticReference {
        x_star: x_star.clone(),
        y_star,
        lambda_star: Some(DVector::from_element(1, -1.0)),
        y_star_of: Box::new(move |x: &DVector<f64>| {
            let n = x.len();
            let e = ones(n);
            let mut v = DVector::zeros(2 * n);
            v.rows_mut(0, n).copy_from(&(x + &e));
            v.rows_mut(n, n).copy_from(&(-x * 2.0 - &e));
            v
        }),
        spurious_points: Vec::new(),
        phi_value: Some(Box::new(move |x: &DVector<f64>| {
            let n = x.len();
            let e = ones(n);
            0.5 * x.dot(&(&a_phi * x)) + 2.0 * e.dot(x) + 0.5 * n as f64
        })),
    };

    let c = move |x: &DVector<f64>, y: &DVector<f64>| -> DVector<f64> {
        DVector::from_element(1, x.sum() + y.sum())
    };
    let c_jac = move |x: &DVector<f64>, y: &DVector<f64>| {
        (
            DMatrix::from_element(1, x.len(), 1.0),
            DMatrix::from_element(1, y.len(), 1.0),
        )
    };

    Ok(ConstrainedMinimaxProblem::new(ProblemParts {
        name: format!("linear(n={n}, delta={delta}, seed={seed})"),
        set_x,
        set_y,
        f: Box::new(f),
        grad_f: Box::new(grad),
        sample_grad: Box::new(sample),
        c: Box::new(c),
        c_jac: Box::new(c_jac),
        kinds: vec![ConstraintKind::Equality],
        noise_dim: n * n,
        noise_level: delta,
        reference: Some(reference),
    }))
}

/// Outcome of a basin-of-attraction run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasinClass {
    TrueSolution,
    Spurious,
    Neither,
}

impl std::fmt::Display for BasinClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BasinClass::TrueSolution => "true_solution",
            BasinClass::Spurious => "spurious",
            BasinClass::Neither => "neither",
        };
        f.write_str(s)
    }
}

/// Convergence errors of a final iterate against the registered points:
/// `e_opt` relative to the true solution, `e_spur` relative to the nearest
/// registered spurious point.
#[derive(Debug, Clone, Copy)]
pub struct BasinErrors {
    pub e_opt: f64,
    pub e_spur: f64,
}

fn point_error(x: &DVector<f64>, y: &DVector<f64>, px: &DVector<f64>, py: &DVector<f64>) -> f64 {
    (x - px).norm().max((y - py).norm())
}

/// Classifies a final iterate by proximity to the registered stationary
/// points: the true solution if `e_opt <= radius`, a spurious point if
/// `e_spur <= radius`, otherwise neither. Both within radius means the
/// radius is too large for the registered geometry and is an error, as is a
/// problem without registered spurious points.
pub fn classify_basin(
    problem: &ConstrainedMinimaxProblem,
    x_final: &DVector<f64>,
    y_final: &DVector<f64>,
    radius: f64,
) -> Result<(BasinClass, BasinErrors)> {
    let reference = problem.reference().ok_or(Error::MissingReference)?;
    if reference.spurious_points.is_empty() {
        return Err(Error::InvalidParameter(
            "basin classification needs registered spurious points".into(),
        ));
    }
    let e_opt = point_error(x_final, y_final, &reference.x_star, &reference.y_star);
    let e_spur = reference
        .spurious_points
        .iter()
        .map(|p| point_error(x_final, y_final, &p.x, &p.y))
        .fold(f64::INFINITY, f64::min);

    let near_opt = e_opt <= radius;
    let near_spur = e_spur <= radius;
    let class = match (near_opt, near_spur) {
        (true, true) => return Err(Error::AmbiguousClassification),
        (true, false) => BasinClass::TrueSolution,
        (false, true) => BasinClass::Spurious,
        (false, false) => BasinClass::Neither,
    };
    Ok((class, BasinErrors { e_opt, e_spur }))
}
