//! Penalty-smoothed stochastic optimization for minimax problems whose
//! constraints couple the inner and outer variables.
//!
//! The toolkit replaces the constrained inner maximization by a quadratic
//! penalty plus a vanishing regularizer, which makes the value function
//! smooth, and solves the resulting sequence of problems with a single-loop
//! stochastic solver (SPACO) that combines one projected ascent step, one
//! momentum-corrected projected descent step, and growing/vanishing
//! parameter schedules. Two baselines (fixed-penalty descent-ascent and a
//! primal-dual method on the multiplier reformulation), analytic benchmark
//! problems, and stationarity diagnostics round out the crate.

pub mod benchmarks;
pub mod diagnostics;
pub mod error;
pub mod penalty;
pub mod problem;
pub mod schedule;
pub mod solver;

pub use benchmarks::{classify_basin, make_linear, make_nonlinear, make_toy2d, BasinClass};
pub use diagnostics::{
    constraint_violation, gen_grad_residual, kkt_residual, multiplier_estimate,
    stationarity_gap_estimate, ErrorNormalizer, MeritConfig, TraceRow,
};
pub use error::{Error, Result};
pub use penalty::{
    inner_max_solve, penalized_grad, penalized_value, sampled_penalized_grad, value_function_grad,
    InnerSolveOptions, InnerSolveReport, PenaltyParams,
};
pub use problem::{
    check_oracle_consistency, AnalyticReference, BoxSet, ConstrainedMinimaxProblem,
    ConstraintKind, NoiseDraw, OracleReport, ProblemParts, StationaryPoint,
};
pub use schedule::{IterParams, Schedule, ScheduleCheck};
pub use solver::{
    gda_fp_run, minminmax_run, spaco_run, spaco_step, GdaFpOptions, MinMinMaxOptions, RunTrace,
    SolverState, StopCriteria, StopReason,
};
