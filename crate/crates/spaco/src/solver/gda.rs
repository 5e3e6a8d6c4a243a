//! Stochastic gradient descent-ascent on the penalized objective with a
//! fixed penalty weight and no regularization. The baseline is biased: its
//! limit point is the stationary point of the fixed-penalty problem, not of
//! the original one.

use crate::diagnostics::{kkt_residual, multiplier_estimate, MeritConfig, RowContext, TraceRecorder};
use crate::error::Result;
use crate::penalty::{sampled_penalized_grad, PenaltyParams};
use crate::problem::ConstrainedMinimaxProblem;
use crate::solver::{ensure_finite, RunTrace, SolverState, StopCriteria, StopReason};

use nalgebra::DVector;

#[derive(Debug, Clone, Copy)]
pub struct GdaFpOptions {
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Alternates one projected ascent step on `y` and one projected descent
/// step on `x` at constant `(rho, sigma = 0)`, drawing a fresh sample for
/// each half-step.
pub fn gda_fp_run(
    problem: &ConstrainedMinimaxProblem,
    opts: &GdaFpOptions,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    seed: u64,
    stop: &StopCriteria,
    diag: MeritConfig,
) -> Result<RunTrace> {
    let pen = PenaltyParams::new(opts.rho, 0.0)?;
    let mut state = SolverState::new(problem, x0, y0, seed);
    let init_x_proj = state.x.clone();
    let init_y_proj = state.y.clone();
    let mut recorder = TraceRecorder::new(problem, &state.x, &state.y, diag, 0.0, seed)?;

    let stop_reason = loop {
        if state.k >= stop.max_iters {
            break StopReason::MaxIters;
        }
        if recorder.due(state.k) {
            recorder.record(
                problem,
                &state,
                &RowContext {
                    pen: Some(pen),
                    residual_step: opts.alpha,
                    cur: None,
                    prev: None,
                    lambda: None,
                },
            )?;
        }

        let draw_y = problem.draw_noise(&mut state.rng);
        let (_, g_y) = sampled_penalized_grad(problem, &state.x, &state.y, &pen, &draw_y);
        ensure_finite(&g_y, "ascent direction", state.k)?;
        state.y = problem.set_y().project(&(&state.y + &g_y * opts.beta));

        let draw_x = problem.draw_noise(&mut state.rng);
        let (g_x, _) = sampled_penalized_grad(problem, &state.x, &state.y, &pen, &draw_x);
        ensure_finite(&g_x, "descent direction", state.k)?;
        state.x = problem.set_x().project(&(&state.x - &g_x * opts.alpha));
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
            let lambda = multiplier_estimate(problem, &state.x, &state.y, opts.rho);
            if kkt_residual(problem, &state.x, &state.y, &lambda) <= tol {
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
        lambda_capped: false,
    })
}
