//! Single-loop stochastic solver: one projected ascent step on `y`, one
//! momentum-corrected projected descent step on `x`, with the penalty
//! growing and the regularization vanishing along the schedule.

use crate::diagnostics::{kkt_residual, multiplier_estimate, MeritConfig, RowContext, TraceRecorder};
use crate::error::Result;
use crate::penalty::sampled_penalized_grad;
use crate::problem::ConstrainedMinimaxProblem;
use crate::schedule::{IterParams, Schedule};
use crate::solver::{ensure_finite, RunTrace, SolverState, StopCriteria, StopReason};

use nalgebra::DVector;

/// One iteration. `cur` holds this iteration's parameters; `prev` holds the
/// previous iteration's (needed by the momentum correction, which
/// re-evaluates the old point under the old penalty weights).
///
/// Per iteration the state's noise stream is consumed in a fixed order: one
/// draw for the ascent direction, then one draw shared by both momentum
/// evaluations.
pub fn spaco_step(
    problem: &ConstrainedMinimaxProblem,
    state: &mut SolverState,
    cur: &IterParams,
    prev: Option<&IterParams>,
) -> Result<()> {
    let pen = cur.penalty();

    // Ascent on y with a fresh sample.
    let draw_y = problem.draw_noise(&mut state.rng);
    let (_, d_y) = sampled_penalized_grad(problem, &state.x, &state.y, &pen, &draw_y);
    ensure_finite(&d_y, "ascent direction", state.k)?;
    let y_next = problem.set_y().project(&(&state.y + &d_y * cur.beta));

    // Momentum-corrected descent direction; both evaluations share one draw.
    let draw_x = problem.draw_noise(&mut state.rng);
    let (fresh, _) = sampled_penalized_grad(problem, &state.x, &y_next, &pen, &draw_x);
    let d_x: DVector<f64> = match (&state.d_x_prev, &state.x_prev, prev) {
        (Some(d_prev), Some(x_prev), Some(prev)) => {
            let (old, _) =
                sampled_penalized_grad(problem, x_prev, &state.y, &prev.penalty(), &draw_x);
            (d_prev - old) * (1.0 - cur.eta) + fresh
        }
        _ => fresh,
    };
    ensure_finite(&d_x, "descent direction", state.k)?;
    let x_next = problem.set_x().project(&(&state.x - &d_x * cur.alpha));

    state.x_prev = Some(std::mem::replace(&mut state.x, x_next));
    state.d_x_prev = Some(d_x);
    state.y = y_next;
    state.k += 1;
    Ok(())
}

/// Runs the solver from `(x0, y0)` (projected into the boxes) until a stop
/// criterion fires. Criteria are applied in the order target error,
/// residual, iteration budget.
pub fn spaco_run(
    problem: &ConstrainedMinimaxProblem,
    schedule: &Schedule,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    seed: u64,
    stop: &StopCriteria,
    diag: MeritConfig,
) -> Result<RunTrace> {
    let schedule = (*schedule).validated()?;
    let mut state = SolverState::new(problem, x0, y0, seed);
    let init_x_proj = state.x.clone();
    let init_y_proj = state.y.clone();
    let mut recorder = TraceRecorder::new(
        problem,
        &state.x,
        &state.y,
        diag,
        schedule.sigma0,
        seed,
    )?;
    let mut prev: Option<IterParams> = None;

    let stop_reason = loop {
        if state.k >= stop.max_iters {
            break StopReason::MaxIters;
        }
        let cur = schedule.params_at(state.k + 1);
        if recorder.due(state.k) {
            recorder.record(
                problem,
                &state,
                &RowContext {
                    pen: Some(cur.penalty()),
                    residual_step: cur.alpha,
                    cur: Some(&cur),
                    prev: prev.as_ref(),
                    lambda: None,
                },
            )?;
        }
        spaco_step(problem, &mut state, &cur, prev.as_ref())?;
        prev = Some(cur);

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
            let lambda = multiplier_estimate(problem, &state.x, &state.y, cur.rho);
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
