//! Single-loop primal-dual baseline on the reformulation that treats the
//! inner constraint through an explicit multiplier: minimize over `(x,
//! lambda)`, maximize over `y`, on the Lagrangian `L = f - lambda^T c`.
//!
//! Known failure mode: the reformulation admits stationary points that are
//! not solutions of the original problem, and under nonlinear constraints
//! the multiplier may grow without bound, hence the configurable cap.

use crate::diagnostics::{kkt_residual, MeritConfig, RowContext, TraceRecorder};
use crate::error::Result;
use crate::problem::{ConstrainedMinimaxProblem, ConstraintKind};
use crate::solver::{ensure_finite, RunTrace, SolverState, StopCriteria, StopReason};

use nalgebra::DVector;

#[derive(Debug, Clone, Copy)]
pub struct MinMinMaxOptions {
    pub alpha_x: f64,
    pub beta_y: f64,
    pub gamma_lambda: f64,
    /// Ascent steps on `y` per outer iteration.
    pub inner_steps: usize,
    /// Initial multiplier value (all components).
    pub lambda0: f64,
    /// Cap on each multiplier component.
    pub lambda_cap: f64,
}

impl Default for MinMinMaxOptions {
    fn default() -> Self {
        Self {
            alpha_x: 0.01,
            beta_y: 0.01,
            gamma_lambda: 0.1,
            inner_steps: 1,
            lambda0: 1.0,
            lambda_cap: 1e6,
        }
    }
}

/// Per outer iteration: `inner_steps` projected ascent steps on `y` for the
/// Lagrangian, then a simultaneous descent step on `x` and multiplier step
/// `lambda <- lambda + gamma * c(x, y)`, projected onto the nonnegative
/// orthant for inequality components (equality multipliers are sign-free)
/// and capped componentwise.
pub fn minminmax_run(
    problem: &ConstrainedMinimaxProblem,
    opts: &MinMinMaxOptions,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    seed: u64,
    stop: &StopCriteria,
    diag: MeritConfig,
) -> Result<RunTrace> {
    assert!(opts.gamma_lambda > 0.0, "multiplier step must be positive");
    assert!(opts.inner_steps >= 1, "at least one inner ascent step");

    let p = problem.num_constraints();
    let mut state = SolverState::new(problem, x0, y0, seed);
    state.lambda = Some(DVector::from_element(p, opts.lambda0));
    let init_x_proj = state.x.clone();
    let init_y_proj = state.y.clone();
    let mut recorder = TraceRecorder::new(problem, &state.x, &state.y, diag, 0.0, seed)?;
    let mut capped = false;

    let stop_reason = loop {
        if state.k >= stop.max_iters {
            break StopReason::MaxIters;
        }
        if recorder.due(state.k) {
            let lambda = state.lambda.clone().expect("multiplier initialized");
            recorder.record(
                problem,
                &state,
                &RowContext {
                    pen: None,
                    residual_step: 1.0,
                    cur: None,
                    prev: None,
                    lambda: Some(&lambda),
                },
            )?;
        }
        let lambda = state.lambda.as_ref().expect("multiplier initialized").clone();

        for _ in 0..opts.inner_steps {
            let draw = problem.draw_noise(&mut state.rng);
            let (_, gy) = problem.sample_grad_f(&state.x, &state.y, &draw);
            let (_, jy) = problem.c_jacobians(&state.x, &state.y);
            let gy_l = gy - jy.transpose() * &lambda;
            ensure_finite(&gy_l, "ascent direction", state.k)?;
            state.y = problem.set_y().project(&(&state.y + &gy_l * opts.beta_y));
        }

        // Simultaneous updates of x and lambda from the current point.
        let draw = problem.draw_noise(&mut state.rng);
        let (gx, _) = problem.sample_grad_f(&state.x, &state.y, &draw);
        let (jx, _) = problem.c_jacobians(&state.x, &state.y);
        let gx_l = gx - jx.transpose() * &lambda;
        ensure_finite(&gx_l, "descent direction", state.k)?;
        let c = problem.c_value(&state.x, &state.y);

        state.x = problem.set_x().project(&(&state.x - &gx_l * opts.alpha_x));
        let mut lambda_next = &lambda + &c * opts.gamma_lambda;
        for i in 0..p {
            if problem.constraint_kinds()[i] == ConstraintKind::Inequality {
                lambda_next[i] = lambda_next[i].max(0.0);
            }
            if lambda_next[i].abs() > opts.lambda_cap {
                lambda_next[i] = lambda_next[i].signum() * opts.lambda_cap;
                capped = true;
            }
        }
        ensure_finite(&lambda_next, "multiplier", state.k)?;
        state.lambda = Some(lambda_next);
        state.k += 1;

        if let Some(eps) = stop.target_eps {
            if recorder
                .normalizer()
                .eval_max(problem, &state.x, &state.y)?
                <= eps
            {
                break StopReason::TargetEps;
            }
        }
        if let Some(tol) = stop.residual_tol {
            let l = state.lambda.as_ref().expect("multiplier initialized");
            if kkt_residual(problem, &state.x, &state.y, l) <= tol {
                break StopReason::ResidualTol;
            }
        }
    };

    let (rows, phi_lower) = recorder.finish();
    Ok(RunTrace {
        rows,
        final_state: state,
        stop_reason,
        x0: init_x_proj,
        y0: init_y_proj,
        phi_lower,
        lambda_capped: capped,
    })
}
