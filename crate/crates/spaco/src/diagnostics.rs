//! Convergence measures: projected-gradient residuals, KKT residuals,
//! multiplier estimates, the merit function, the large-sample stationarity
//! gap estimator, solution errors, and per-iteration trace rows.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::penalty::{
    inner_max_solve, penalized_grad, penalty_residual, sampled_penalized_grad, InnerSolveOptions,
    PenaltyParams,
};
use crate::problem::{BoxSet, ConstrainedMinimaxProblem};
use crate::schedule::IterParams;

/// `||x - P(x - alpha * g)|| / alpha`: the projected-gradient residual.
/// Zero exactly at points where `-g` lies in the normal cone of the set.
pub fn gen_grad_residual(x: &DVector<f64>, g: &DVector<f64>, alpha: f64, set: &BoxSet) -> f64 {
    assert!(alpha > 0.0, "residual step must be positive");
    (x - set.project(&(x - g * alpha))).norm() / alpha
}

/// Constraint violation `||v||` with `v_i = max(c_i, 0)` for inequality
/// components and `v_i = |c_i|` for equality components.
pub fn constraint_violation(problem: &ConstrainedMinimaxProblem, c: &DVector<f64>) -> f64 {
    penalty_residual(c, problem.constraint_kinds()).norm()
}

/// Residual of the stationarity system at `(x, y, lambda)`: the maximum of
/// the two unit-step gradient mappings of the Lagrangian `L = f - lambda^T c`
/// (descent in `x` over `X`, ascent in `y` over `Y`), the constraint
/// violation, and the complementarity gap `|lambda^T c|`.
///
/// Multipliers on inequality components must be nonnegative; equality
/// components carry sign-free multipliers.
pub fn kkt_residual(
    problem: &ConstrainedMinimaxProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    lambda: &DVector<f64>,
) -> f64 {
    use crate::problem::ConstraintKind;
    debug_assert!(problem
        .constraint_kinds()
        .iter()
        .zip(lambda.iter())
        .all(|(k, l)| *k == ConstraintKind::Equality || *l >= 0.0));

    let (gx, gy) = problem.grad_f(x, y);
    let (jx, jy) = problem.c_jacobians(x, y);
    let lx = gx - jx.transpose() * lambda;
    let ly = gy - jy.transpose() * lambda;
    let c = problem.c_value(x, y);

    let stat_x = (x - problem.set_x().project(&(x - &lx))).norm();
    let stat_y = (y - problem.set_y().project(&(y + &ly))).norm();
    let feas = constraint_violation(problem, &c);
    let comp = lambda.dot(&c).abs();
    stat_x.max(stat_y).max(feas).max(comp)
}

/// Multiplier estimate `rho * [c]_+` (with `rho * c` on equality
/// components) associated with the penalty at weight `rho`.
pub fn multiplier_estimate(
    problem: &ConstrainedMinimaxProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    rho: f64,
) -> DVector<f64> {
    assert!(rho > 0.0, "penalty weight must be positive");
    penalty_residual(&problem.c_value(x, y), problem.constraint_kinds()) * rho
}

/// Large-sample estimate of the squared joint stationarity gap at `(x, y)`:
/// averages the unit-step projected displacement
/// `(x - P_X(x - g_x), y - P_Y(y + g_y))` of the stochastic penalized
/// gradient over `num_samples` draws, then takes the squared norm of the
/// average. Draws come from a dedicated stream seeded with `seed`, so the
/// same fixed sample set is reused on every call.
pub fn stationarity_gap_estimate(
    problem: &ConstrainedMinimaxProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    params: &PenaltyParams,
    num_samples: usize,
    seed: u64,
) -> f64 {
    assert!(num_samples >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = x.len();
    let mut acc = DVector::<f64>::zeros(nx + y.len());
    for _ in 0..num_samples {
        let draw = problem.draw_noise(&mut rng);
        let (gx, gy) = sampled_penalized_grad(problem, x, y, params, &draw);
        let dx = x - problem.set_x().project(&(x - gx));
        let dy = y - problem.set_y().project(&(y + gy));
        for i in 0..nx {
            acc[i] += dx[i];
        }
        for j in 0..y.len() {
            acc[nx + j] += dy[j];
        }
    }
    (acc / num_samples as f64).norm_squared()
}

/// Normalized solution errors relative to the analytic reference.
///
/// `eps_x = ||x - x*||^2 / (||x0 - x*||^2 + 1)` and
/// `eps_y = ||y - y*(x)||^2 / (||y0 - y*(x)||^2 + 1)`, where `y*(x)` is the
/// exact constrained inner solution at the current `x` (not the penalized
/// one) and `(x0, y0)` are the initial iterates recorded at run start.
pub struct ErrorNormalizer {
    y0: DVector<f64>,
    den_x: f64,
}

impl ErrorNormalizer {
    pub fn new(
        problem: &ConstrainedMinimaxProblem,
        x0: &DVector<f64>,
        y0: &DVector<f64>,
    ) -> Result<Self> {
        let reference = problem.reference().ok_or(Error::MissingReference)?;
        Ok(Self {
            y0: y0.clone(),
            den_x: (x0 - &reference.x_star).norm_squared() + 1.0,
        })
    }

    pub fn eval(
        &self,
        problem: &ConstrainedMinimaxProblem,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<(f64, f64)> {
        let reference = problem.reference().ok_or(Error::MissingReference)?;
        let eps_x = (x - &reference.x_star).norm_squared() / self.den_x;
        let y_star = reference.y_star_of(x);
        let eps_y = (y - &y_star).norm_squared() / ((&self.y0 - &y_star).norm_squared() + 1.0);
        Ok((eps_x, eps_y))
    }

    /// `max(eps_x, eps_y)`, the stopping quantity for target-error runs.
    pub fn eval_max(
        &self,
        problem: &ConstrainedMinimaxProblem,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<f64> {
        let (ex, ey) = self.eval(problem, x, y)?;
        Ok(ex.max(ey))
    }
}

/// Which diagnostics to compute per recorded row, and how often.
#[derive(Debug, Clone)]
pub struct MeritConfig {
    /// Record a row every `stride` iterations (state snapshots taken before
    /// each step whose index is a multiple of `stride`).
    pub stride: usize,
    /// Tolerance for the inner maximizations behind the value-function
    /// residual and the merit terms.
    pub inner_tol: f64,
    /// Compute the merit value (momentum solvers only).
    pub merit: bool,
    /// Compute the KKT residual with an estimated (or carried) multiplier.
    pub kkt: bool,
    /// Number of samples for the stationarity gap estimate; `None` disables.
    pub gap_samples: Option<usize>,
    /// Override for the value-function lower bound used by the merit.
    /// Defaults to `min_k f(x^k, y^k) - sigma0 * M^2 / 2 - 1` over the
    /// recorded rows, where `M` bounds `||y||` on `Y`.
    pub phi_lower: Option<f64>,
}

impl Default for MeritConfig {
    fn default() -> Self {
        Self {
            stride: 10,
            inner_tol: 1e-4,
            merit: false,
            kkt: false,
            gap_samples: None,
            phi_lower: None,
        }
    }
}

impl MeritConfig {
    /// A configuration that records (essentially) nothing, for runs where
    /// only the final state matters.
    pub fn disabled() -> Self {
        Self {
            stride: usize::MAX,
            ..Self::default()
        }
    }
}

/// One diagnostics record. Optional entries are absent when the
/// corresponding component is disabled or not applicable to the solver.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub k: usize,
    pub eps_x: f64,
    pub eps_y: f64,
    pub gen_grad_residual: f64,
    pub constraint_violation: f64,
    pub kkt_residual: Option<f64>,
    pub merit_value: Option<f64>,
    pub gap_estimate: Option<f64>,
    pub lambda_norm: Option<f64>,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str =
        "k,eps_x,eps_y,gen_grad_residual,constraint_violation,kkt_residual,merit_value,gap_estimate,lambda_norm";

    /// Field values in header order, formatted with shortest round-trip
    /// precision; absent optionals become empty fields.
    pub fn csv_fields(&self) -> Vec<String> {
        fn opt(v: Option<f64>) -> String {
            v.map(|t| format!("{t:?}")).unwrap_or_default()
        }
        vec![
            format!("{}", self.k),
            format!("{:?}", self.eps_x),
            format!("{:?}", self.eps_y),
            format!("{:?}", self.gen_grad_residual),
            format!("{:?}", self.constraint_violation),
            opt(self.kkt_residual),
            opt(self.merit_value),
            opt(self.gap_estimate),
            opt(self.lambda_norm),
        ]
    }

    pub fn csv_line(&self) -> String {
        self.csv_fields().join(",")
    }
}

/// Solver-specific inputs for one diagnostics row.
pub struct RowContext<'a> {
    /// Penalty parameters in force at this iterate, when the solver is
    /// penalty-based.
    pub pen: Option<PenaltyParams>,
    /// Step used in the generalized gradient residual.
    pub residual_step: f64,
    /// Current and previous iteration parameters (momentum solver only).
    pub cur: Option<&'a IterParams>,
    pub prev: Option<&'a IterParams>,
    /// Carried multiplier (primal-dual solver); penalty solvers estimate one.
    pub lambda: Option<&'a DVector<f64>>,
}

struct MeritParts {
    row_index: usize,
    phi_value: f64,
    tracking_sq: f64,
    ex_sq: f64,
    disp_sq: f64,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

/// Accumulates trace rows during a run and assembles the merit column once
/// the value-function lower bound is known.
pub struct TraceRecorder {
    config: MeritConfig,
    normalizer: ErrorNormalizer,
    rows: Vec<TraceRow>,
    merit_parts: Vec<MeritParts>,
    gap_seed: u64,
    min_observed_f: f64,
    sigma0: f64,
    y_max_norm: f64,
}

impl TraceRecorder {
    /// `sigma0` enters the default value-function lower bound; pass zero for
    /// solvers without a regularization schedule.
    pub fn new(
        problem: &ConstrainedMinimaxProblem,
        x0: &DVector<f64>,
        y0: &DVector<f64>,
        config: MeritConfig,
        sigma0: f64,
        run_seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            config,
            normalizer: ErrorNormalizer::new(problem, x0, y0)?,
            rows: Vec::new(),
            merit_parts: Vec::new(),
            gap_seed: run_seed ^ 0x9E37_79B9_7F4A_7C15,
            min_observed_f: f64::INFINITY,
            sigma0,
            y_max_norm: problem.set_y().max_norm(),
        })
    }

    pub fn due(&self, k: usize) -> bool {
        self.config.stride != usize::MAX && k % self.config.stride == 0
    }

    pub fn normalizer(&self) -> &ErrorNormalizer {
        &self.normalizer
    }

    pub fn record(
        &mut self,
        problem: &ConstrainedMinimaxProblem,
        state: &crate::solver::SolverState,
        ctx: &RowContext<'_>,
    ) -> Result<()> {
        let x = &state.x;
        let y = &state.y;
        let (eps_x, eps_y) = self.normalizer.eval(problem, x, y)?;
        self.min_observed_f = self.min_observed_f.min(problem.f_value(x, y));
        let c = problem.c_value(x, y);
        let violation = constraint_violation(problem, &c);

        // Inner maximizer at the current penalty weights, shared by the
        // value-function residual and the merit terms.
        let inner = match &ctx.pen {
            Some(pen) => Some(inner_max_solve(
                problem,
                x,
                pen,
                &InnerSolveOptions {
                    tol: self.config.inner_tol,
                    ..Default::default()
                },
                Some(y),
            )?),
            None => None,
        };

        let residual = match (&inner, &ctx.pen) {
            (Some(report), Some(pen)) => {
                if !report.converged {
                    return Err(Error::InnerSolveFailed {
                        iterations: report.iterations,
                        residual: report.final_ascent_residual,
                    });
                }
                let (gx, _) = penalized_grad(problem, x, &report.y_star, pen);
                gen_grad_residual(x, &gx, ctx.residual_step, problem.set_x())
            }
            _ => {
                // Primal-dual path: residual of the Lagrangian x-gradient.
                let lambda = ctx.lambda.expect("primal-dual rows carry a multiplier");
                let (gx, _) = problem.grad_f(x, y);
                let (jx, _) = problem.c_jacobians(x, y);
                let lx = gx - jx.transpose() * lambda;
                gen_grad_residual(x, &lx, ctx.residual_step, problem.set_x())
            }
        };

        let estimate;
        let lambda_ref = match (ctx.lambda, &ctx.pen) {
            (Some(l), _) => Some(l),
            (None, Some(pen)) => {
                estimate = multiplier_estimate(problem, x, y, pen.rho);
                Some(&estimate)
            }
            _ => None,
        };
        let kkt = if self.config.kkt {
            lambda_ref.map(|l| kkt_residual(problem, x, y, l))
        } else {
            None
        };
        let lambda_norm = lambda_ref.map(|l| l.norm());

        let gap = match (self.config.gap_samples, &ctx.pen) {
            (Some(t), Some(pen)) => Some(stationarity_gap_estimate(
                problem,
                x,
                y,
                pen,
                t,
                self.gap_seed,
            )),
            _ => None,
        };

        if self.config.merit {
            if let (Some(report), Some(cur), Some(prev), Some(x_prev), Some(d_x_prev)) = (
                &inner,
                ctx.cur,
                ctx.prev,
                state.x_prev.as_ref(),
                state.d_x_prev.as_ref(),
            ) {
                let (gx_prev, _) = penalized_grad(problem, x_prev, y, &prev.penalty());
                self.merit_parts.push(MeritParts {
                    row_index: self.rows.len(),
                    phi_value: report.value,
                    tracking_sq: (y - &report.y_star).norm_squared(),
                    ex_sq: (d_x_prev - gx_prev).norm_squared(),
                    disp_sq: (x - x_prev).norm_squared(),
                    a: cur.a,
                    b: cur.b,
                    c: cur.c,
                    d: cur.d,
                });
            }
        }

        self.rows.push(TraceRow {
            k: state.k,
            eps_x,
            eps_y,
            gen_grad_residual: residual,
            constraint_violation: violation,
            kkt_residual: kkt,
            merit_value: None,
            gap_estimate: gap,
            lambda_norm,
        });
        Ok(())
    }

    /// Fills the merit column using the configured or default lower bound
    /// and returns the rows together with the bound actually used.
    pub fn finish(mut self) -> (Vec<TraceRow>, Option<f64>) {
        if self.merit_parts.is_empty() {
            return (self.rows, None);
        }
        let phi_lower = self.config.phi_lower.unwrap_or_else(|| {
            self.min_observed_f - 0.5 * self.sigma0 * self.y_max_norm.powi(2) - 1.0
        });
        for part in &self.merit_parts {
            let v = part.a * (part.phi_value - phi_lower)
                + part.b * part.tracking_sq
                + part.c * part.ex_sq
                + part.d * part.disp_sq;
            self.rows[part.row_index].merit_value = Some(v);
        }
        (self.rows, Some(phi_lower))
    }
}
