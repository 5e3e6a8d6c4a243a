//! Shared machinery: problem construction, initialization policy, solver
//! dispatch, and seeded single runs.

use anyhow::{bail, Context, Result};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spaco::{
    gda_fp_run, minminmax_run, spaco_run, BoxSet, ConstrainedMinimaxProblem, GdaFpOptions,
    MeritConfig, MinMinMaxOptions, RunTrace, Schedule, StopCriteria,
};

use crate::config::Config;

pub fn build_problem(cfg: &Config) -> Result<ConstrainedMinimaxProblem> {
    let name = cfg.str_or("problem.name", "toy2d");
    let n = cfg.usize_or("problem.n", 100)?;
    let delta = cfg.f64_or("problem.delta", 1.0)?;
    let seed = cfg.u64_or("problem.seed", 0)?;
    match name.as_str() {
        "toy2d" => Ok(spaco::make_toy2d()),
        "nonlinear" => Ok(spaco::make_nonlinear(n, delta, seed)?),
        "linear" => Ok(spaco::make_linear(n, delta, seed)?),
        other => bail!("unknown problem `{other}` (expected toy2d, nonlinear, or linear)"),
    }
}

pub fn build_schedule(cfg: &Config) -> Result<Schedule> {
    let base = Schedule::default_nonlinear();
    Ok(Schedule {
        rho0: cfg.f64_or("schedule.rho0", base.rho0)?,
        sigma0: cfg.f64_or("schedule.sigma0", base.sigma0)?,
        alpha0: cfg.f64_or("schedule.alpha0", base.alpha0)?,
        beta0: cfg.f64_or("schedule.beta0", base.beta0)?,
        eta0: cfg.f64_or("schedule.eta0", base.eta0)?,
        t: cfg.f64_or("schedule.t", base.t)?,
        s: cfg.f64_or("schedule.s", base.s)?,
        lipschitz_guard: cfg.f64_opt("schedule.lipschitz_guard")?,
    })
}

pub fn build_stop(cfg: &Config) -> Result<StopCriteria> {
    Ok(StopCriteria {
        max_iters: cfg.usize_or("stop.max_iters", 10_000)?,
        target_eps: cfg.f64_opt("stop.target_eps")?,
        residual_tol: cfg.f64_opt("stop.residual_tol")?,
    })
}

pub fn build_diag(cfg: &Config) -> Result<MeritConfig> {
    let gap = cfg.usize_or("diag.gap_samples", 0)?;
    Ok(MeritConfig {
        stride: cfg.usize_or("diag.stride", 10)?,
        inner_tol: cfg.f64_or("diag.inner_tol", 1e-4)?,
        merit: cfg.bool_or("diag.merit", false)?,
        kkt: cfg.bool_or("diag.kkt", false)?,
        gap_samples: (gap > 0).then_some(gap),
        phi_lower: None,
    })
}

/// Initialization policy for one block of variables.
#[derive(Debug, Clone)]
pub enum InitPolicy {
    /// Uniform over the given box (defaults to the problem's feasible box).
    Uniform(Option<(f64, f64)>),
    Zero,
    Center,
    /// Every component set to the scalar.
    Scalar(f64),
    /// Explicit vector.
    Vector(Vec<f64>),
}

impl InitPolicy {
    fn parse(spec: &str, lo: Option<f64>, hi: Option<f64>) -> Result<Self> {
        match spec {
            "uniform" => Ok(Self::Uniform(match (lo, hi) {
                (Some(a), Some(b)) => Some((a, b)),
                (None, None) => None,
                _ => bail!("init range needs both _lo and _hi"),
            })),
            "zero" => Ok(Self::Zero),
            "center" => Ok(Self::Center),
            s if s.contains(',') => Ok(Self::Vector(
                s.split(',')
                    .map(|t| t.trim().parse().context("init vector entry"))
                    .collect::<Result<_>>()?,
            )),
            s => Ok(Self::Scalar(s.parse().with_context(|| {
                format!("init spec `{s}`: expected uniform, zero, center, scalar, or a vector")
            })?)),
        }
    }

    pub fn realize(&self, set: &BoxSet, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
        Ok(match self {
            Self::Uniform(None) => set.sample_uniform(rng),
            Self::Uniform(Some((lo, hi))) => {
                let sub = BoxSet::cube(set.dim(), *lo, *hi)?;
                sub.sample_uniform(rng)
            }
            Self::Zero => DVector::zeros(set.dim()),
            Self::Center => set.center(),
            Self::Scalar(v) => DVector::from_element(set.dim(), *v),
            Self::Vector(v) => {
                if v.len() != set.dim() {
                    bail!("init vector has {} entries, expected {}", v.len(), set.dim());
                }
                DVector::from_column_slice(v)
            }
        })
    }
}

pub fn build_inits(cfg: &Config) -> Result<(InitPolicy, InitPolicy)> {
    let x = InitPolicy::parse(
        &cfg.str_or("init.x", "uniform"),
        cfg.f64_opt("init.x_lo")?,
        cfg.f64_opt("init.x_hi")?,
    )?;
    let y = InitPolicy::parse(
        &cfg.str_or("init.y", "uniform"),
        cfg.f64_opt("init.y_lo")?,
        cfg.f64_opt("init.y_hi")?,
    )?;
    Ok((x, y))
}

/// Which solver to run, with its hyperparameters.
#[derive(Debug, Clone)]
pub enum SolverSpec {
    Spaco(Schedule),
    GdaFp(GdaFpOptions),
    MinMinMax(MinMinMaxOptions),
}

impl SolverSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Spaco(_) => "spaco",
            Self::GdaFp(_) => "gda_fp",
            Self::MinMinMax(_) => "minminmax",
        }
    }
}

pub fn build_solver(cfg: &Config) -> Result<SolverSpec> {
    match cfg.str_or("solver.name", "spaco").as_str() {
        "spaco" => Ok(SolverSpec::Spaco(build_schedule(cfg)?)),
        "gda_fp" => Ok(SolverSpec::GdaFp(GdaFpOptions {
            rho: cfg.f64_or("solver.rho", 20.0)?,
            alpha: cfg.f64_or("solver.alpha", 0.001)?,
            beta: cfg.f64_or("solver.beta", 0.01)?,
        })),
        "minminmax" => Ok(SolverSpec::MinMinMax(MinMinMaxOptions {
            alpha_x: cfg.f64_or("solver.alpha", 0.01)?,
            beta_y: cfg.f64_or("solver.beta", 0.01)?,
            gamma_lambda: cfg.f64_or("solver.gamma", 0.1)?,
            inner_steps: cfg.usize_or("solver.inner_steps", 1)?,
            lambda0: cfg.f64_or("solver.lambda0", 1.0)?,
            lambda_cap: cfg.f64_or("solver.lambda_cap", 1e6)?,
        })),
        other => bail!("unknown solver `{other}` (expected spaco, gda_fp, or minminmax)"),
    }
}

/// Draws the initial point for run `seed` and executes the solver.
///
/// The init draw uses its own stream (`seed ^ INIT_STREAM`) so that the
/// initial point and the solver's noise stream are independent.
pub fn run_once(
    problem: &ConstrainedMinimaxProblem,
    solver: &SolverSpec,
    init_x: &InitPolicy,
    init_y: &InitPolicy,
    seed: u64,
    stop: &StopCriteria,
    diag: MeritConfig,
) -> Result<RunTrace> {
    const INIT_STREAM: u64 = 0x5EED_1217_C0FF_EE00;
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ INIT_STREAM);
    let x0 = init_x.realize(problem.set_x(), &mut init_rng)?;
    let y0 = init_y.realize(problem.set_y(), &mut init_rng)?;
    let trace = match solver {
        SolverSpec::Spaco(schedule) => spaco_run(problem, schedule, &x0, &y0, seed, stop, diag)?,
        SolverSpec::GdaFp(opts) => gda_fp_run(problem, opts, &x0, &y0, seed, stop, diag)?,
        SolverSpec::MinMinMax(opts) => minminmax_run(problem, opts, &x0, &y0, seed, stop, diag)?,
    };
    Ok(trace)
}

/// Runs `jobs` closures on up to `threads` workers, returning results in
/// job order regardless of scheduling.
pub fn run_parallel<T: Send, F>(jobs: Vec<F>, threads: usize) -> Result<Vec<T>>
where
    F: FnOnce() -> Result<T> + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .context("building thread pool")?;
    let results: Vec<Result<T>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.into_par_iter().map(|job| job()).collect()
    });
    results.into_iter().collect()
}
