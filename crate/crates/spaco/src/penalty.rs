//! Quadratic-penalty smoothing of the coupled constraints.
//!
//! The penalized, regularized objective is
//!
//! ```text
//! psi(x, y) = f(x, y) - (rho/2) * sum_i p_i(x, y) - (sigma/2) * ||y||^2
//! ```
//!
//! with `p_i = max(c_i, 0)^2` for inequality components and `p_i = c_i^2`
//! for equality components. For `sigma > 0` (or a strongly concave `f`)
//! the inner maximization has a unique solution `y*(x)`, the smoothed value
//! function `phi(x) = max_y psi(x, y)` is differentiable, and its gradient
//! is the x-block of `grad psi` evaluated at `(x, y*(x))`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problem::{ConstrainedMinimaxProblem, ConstraintKind, NoiseDraw};

/// Penalty weight `rho` and regularization weight `sigma`.
///
/// `sigma = 0` is permitted only when the caller knows the inner problem is
/// already strongly concave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    pub rho: f64,
    pub sigma: f64,
}

impl PenaltyParams {
    pub fn new(rho: f64, sigma: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
        }
        if !(sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be nonnegative, got {sigma}"
            )));
        }
        Ok(Self { rho, sigma })
    }
}

/// `max(c, 0)` for inequality components, `c` itself for equality ones.
/// This is the factor multiplying the constraint Jacobian in the penalty
/// gradient; at `c = 0` it is zero, consistent with `[c]_+ * grad c = 0`.
pub fn penalty_residual(c: &DVector<f64>, kinds: &[ConstraintKind]) -> DVector<f64> {
    DVector::from_fn(c.len(), |i, _| match kinds[i] {
        ConstraintKind::Inequality => c[i].max(0.0),
        ConstraintKind::Equality => c[i],
    })
}

/// `(1/2) * sum_i p_i(x, y)` without the `rho` factor.
fn half_squared_penalty(c: &DVector<f64>, kinds: &[ConstraintKind]) -> f64 {
    let r = penalty_residual(c, kinds);
    0.5 * r.norm_squared()
}

/// Value of the penalized regularized objective at `(x, y)`.
pub fn penalized_value(
    problem: &ConstrainedMinimaxProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    params: &PenaltyParams,
) -> f64 {
    let c = problem.c_value(x, y);
    problem.f_value(x, y)
        - params.rho * half_squared_penalty(&c, problem.constraint_kinds())
        - 0.5 * params.sigma * y.norm_squared()
}

fn penalty_grad_terms(
    problem: &ConstrainedMinimaxProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    params: &PenaltyParams,
) -> (DVector<f64>, DVector<f64>) {
    let c = problem.c_value(x, y);
    let r = penalty_residual(&c, problem.constraint_kinds());
    let (jx, jy) = problem.c_jacobians(x, y);
    let px = jx.transpose() * &r * params.rho;
    let py = jy.transpose() * &r * params.rho;
    (px, py)
}

/// Deterministic gradient of the penalized objective:
/// `g_x = grad_x f - rho * Jx^T r`, `g_y = grad_y f - rho * Jy^T r - sigma * y`
/// where `r` is the penalty residual.
pub fn penalized_grad(
    problem: &ConstrainedMinimaxProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    params: &PenaltyParams,
) -> (DVector<f64>, DVector<f64>) {
    let (gx, gy) = problem.grad_f(x, y);
    let (px, py) = penalty_grad_terms(problem, x, y, params);
    (gx - px, gy - py - y * params.sigma)
}

/// Stochastic gradient of the penalized objective: identical to
/// [`penalized_grad`] with the sampled `f`-gradient in place of the exact
/// one. The penalty and regularizer terms are deterministic.
pub fn sampled_penalized_grad(
    problem: &ConstrainedMinimaxProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    params: &PenaltyParams,
    draw: &NoiseDraw,
) -> (DVector<f64>, DVector<f64>) {
    let (gx, gy) = problem.sample_grad_f(x, y, draw);
    let (px, py) = penalty_grad_terms(problem, x, y, params);
    (gx - px, gy - py - y * params.sigma)
}

/// Result of the inner maximization `max_{y in Y} psi(x, y)`.
#[derive(Debug, Clone)]
pub struct InnerSolveReport {
    pub y_star: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub final_ascent_residual: f64,
    pub converged: bool,
}

/// Options for [`inner_max_solve`].
#[derive(Debug, Clone, Copy)]
pub struct InnerSolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InnerSolveOptions {
    fn default() -> Self {
        // The ascent contracts at roughly one over the condition number per
        // step, and the penalty curvature scales with rho, so large weights
        // legitimately need millions of cheap iterations.
        Self {
            tol: 1e-8,
            max_iter: 2_000_000,
        }
    }
}

/// Estimates the largest curvature of `y -> psi(x, y)` near `y0` by power
/// iteration on the finite-difference Hessian action.
fn curvature_estimate(
    problem: &ConstrainedMinimaxProblem,
    x: &DVector<f64>,
    y0: &DVector<f64>,
    params: &PenaltyParams,
) -> f64 {
    let m = y0.len();
    let eps = 1e-6 * (1.0 + y0.norm());
    // Deterministic start vector with no special alignment.
    let mut v = DVector::from_fn(m, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    v /= v.norm();
    let mut lambda: f64 = 0.0;
    for _ in 0..8 {
        let yp = y0 + &v * eps;
        let ym = y0 - &v * eps;
        let (_, gp) = penalized_grad(problem, x, &yp, params);
        let (_, gm) = penalized_grad(problem, x, &ym, params);
        let hv = (gp - gm) / (2.0 * eps);
        let n = hv.norm();
        if !n.is_finite() || n < 1e-12 {
            break;
        }
        lambda = n;
        v = hv / n;
    }
    lambda.max(params.sigma).max(1e-6)
}

/// Projected gradient ascent on `y -> psi(x, y)` with a curvature-scaled
/// step. Used only for diagnostics and verification, never inside the main
/// solver loops.
///
/// Stops when `||y - P_Y(y + step * g_y)|| / step <= tol`. The step starts
/// at `0.9 / L_hat` and halves whenever a step fails to increase the value;
/// shrinking the step only makes the stopping residual stricter.
pub fn inner_max_solve(
    problem: &ConstrainedMinimaxProblem,
    x: &DVector<f64>,
    params: &PenaltyParams,
    opts: &InnerSolveOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<InnerSolveReport> {
    let set_y = problem.set_y();
    let mut y = set_y.project(warm_start.unwrap_or(&set_y.center()));
    let l_hat = curvature_estimate(problem, x, &y, params);
    let mut step = 0.9 / l_hat;
    let mut value = penalized_value(problem, x, &y, params);
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: "inner objective".into(),
            k: 0,
        });
    }

    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iter {
        let (_, gy) = penalized_grad(problem, x, &y, params);
        if gy.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                what: "inner gradient".into(),
                k: it,
            });
        }
        let y_next = set_y.project(&(&y + &gy * step));
        residual = (&y - &y_next).norm() / step;
        if residual <= opts.tol {
            return Ok(InnerSolveReport {
                y_star: y,
                value,
                iterations: it,
                final_ascent_residual: residual,
                converged: true,
            });
        }
        let value_next = penalized_value(problem, x, &y_next, params);
        if value_next < value - 1e-12 * (1.0 + value.abs()) {
            step *= 0.5;
            continue;
        }
        y = y_next;
        value = value_next;
    }

    Ok(InnerSolveReport {
        y_star: y,
        value,
        iterations: opts.max_iter,
        final_ascent_residual: residual,
        converged: false,
    })
}

/// Gradient of the smoothed value function `phi(x) = max_y psi(x, y)`:
/// the x-block of `grad psi` at the inner maximizer.
pub fn value_function_grad(
    problem: &ConstrainedMinimaxProblem,
    x: &DVector<f64>,
    params: &PenaltyParams,
    inner_tol: f64,
    warm_start: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let report = inner_max_solve(
        problem,
        x,
        params,
        &InnerSolveOptions {
            tol: inner_tol,
            ..Default::default()
        },
        warm_start,
    )?;
    if !report.converged {
        return Err(Error::InnerSolveFailed {
            iterations: report.iterations,
            residual: report.final_ascent_residual,
        });
    }
    let (gx, _) = penalized_grad(problem, x, &report.y_star, params);
    Ok(gx)
}
