//! Solver drivers sharing a common state, stop, and trace interface.
//!
//! All runs are strictly sequential; concurrency happens only across
//! independent runs, each owning its own state and noise stream.

mod gda;
mod minminmax;
mod spaco;

pub use gda::{gda_fp_run, GdaFpOptions};
pub use minminmax::{minminmax_run, MinMinMaxOptions};
pub use spaco::{spaco_run, spaco_step};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::TraceRow;
use crate::error::{Error, Result};
use crate::problem::ConstrainedMinimaxProblem;

/// Mutable per-run state: the iterates, the momentum direction and the point
/// it was computed at, the iteration counter, the run's noise stream, and
/// (for the primal-dual solver) the multiplier.
pub struct SolverState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub x_prev: Option<DVector<f64>>,
    pub d_x_prev: Option<DVector<f64>>,
    /// Number of completed iterations.
    pub k: usize,
    pub rng: ChaCha8Rng,
    pub lambda: Option<DVector<f64>>,
}

impl SolverState {
    /// Projects the initial point into the feasible boxes and seeds the
    /// run's noise stream.
    pub fn new(
        problem: &ConstrainedMinimaxProblem,
        x0: &DVector<f64>,
        y0: &DVector<f64>,
        seed: u64,
    ) -> Self {
        Self {
            x: problem.set_x().project(x0),
            y: problem.set_y().project(y0),
            x_prev: None,
            d_x_prev: None,
            k: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            lambda: None,
        }
    }
}

/// Stop conditions, applied after every iteration in the order
/// target error, residual, iteration budget.
#[derive(Debug, Clone, Copy)]
pub struct StopCriteria {
    pub max_iters: usize,
    /// Threshold on `max(eps_x, eps_y)`; requires an analytic reference.
    pub target_eps: Option<f64>,
    /// Threshold on the KKT residual evaluated with the solver's carried or
    /// estimated multiplier.
    pub residual_tol: Option<f64>,
}

impl StopCriteria {
    pub fn max_iters(max_iters: usize) -> Self {
        Self {
            max_iters,
            target_eps: None,
            residual_tol: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    TargetEps,
    ResidualTol,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::MaxIters => "max_iters",
            StopReason::TargetEps => "target_eps",
            StopReason::ResidualTol => "residual_tol",
        };
        f.write_str(s)
    }
}

/// Output of a run: the recorded rows (snapshots taken before each step at
/// the configured stride), the terminal state, and why the run stopped.
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub final_state: SolverState,
    pub stop_reason: StopReason,
    /// Initial iterates after projection; error metrics normalize against
    /// these.
    pub x0: DVector<f64>,
    pub y0: DVector<f64>,
    /// Value-function lower bound used for the merit column, if computed.
    pub phi_lower: Option<f64>,
    /// Whether the multiplier cap was ever hit (primal-dual solver).
    pub lambda_capped: bool,
}

pub(crate) fn ensure_finite(v: &DVector<f64>, what: &str, k: usize) -> Result<()> {
    if v.iter().all(|t| t.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: what.into(),
            k,
        })
    }
}
