//! The four experiment drivers behind the CLI subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::DVector;

use spaco::{
    classify_basin, BasinClass, ConstrainedMinimaxProblem, ErrorNormalizer, MeritConfig, RunTrace,
    Schedule, StopCriteria, StopReason, TraceRow,
};

use crate::config::Config;
use crate::csvio::{float, quantile_sorted, CsvFile};
use crate::runner::{
    build_diag, build_inits, build_problem, build_solver, build_stop, run_once, run_parallel,
    InitPolicy, SolverSpec,
};

fn preamble(csv: &mut CsvFile, cfg: &Config, extra: &[String]) {
    for line in cfg.echo() {
        csv.comment(&line);
    }
    for line in extra {
        csv.comment(line);
    }
}

pub struct ConvergenceOutcome {
    pub traces: Vec<RunTrace>,
    /// `(eps_x, eps_y)` at each run's final state.
    pub final_metrics: Vec<(f64, f64)>,
    pub files: Vec<PathBuf>,
}

/// Executes `repetitions` seeded runs, writes one trace CSV per run plus an
/// aggregate CSV with per-iteration medians and interquartile ranges of the
/// solution errors across runs.
pub fn run_convergence(cfg: &Config, out_dir: &Path, threads: usize) -> Result<ConvergenceOutcome> {
    let problem = build_problem(cfg)?;
    let solver = build_solver(cfg)?;
    let (init_x, init_y) = build_inits(cfg)?;
    let stop = build_stop(cfg)?;
    let diag = build_diag(cfg)?;
    let reps = cfg.usize_or("repetitions", 1)?;
    let base_seed = cfg.u64_or("seed", 0)?;
    cfg.reject_unknown()?;

    let jobs: Vec<_> = (0..reps)
        .map(|r| {
            let problem = &problem;
            let solver = &solver;
            let init_x = &init_x;
            let init_y = &init_y;
            let diag = diag.clone();
            move || {
                run_once(
                    problem,
                    solver,
                    init_x,
                    init_y,
                    base_seed + r as u64,
                    &stop,
                    diag,
                )
                .map_err(anyhow::Error::from)
            }
        })
        .collect();
    let traces = run_parallel(jobs, threads)?;

    let mut files = Vec::new();
    for (r, trace) in traces.iter().enumerate() {
        let mut csv = CsvFile::new();
        let mut extra = vec![
            format!("run = {r}"),
            format!("run_seed = {}", base_seed + r as u64),
            format!("stop_reason = {}", trace.stop_reason),
            format!("final_k = {}", trace.final_state.k),
            "merit coefficients use the unclamped power laws".to_string(),
        ];
        if let Some(pl) = trace.phi_lower {
            extra.push(format!("phi_lower = {}", float(pl)));
        }
        if trace.lambda_capped {
            extra.push("lambda_cap_hit = true".to_string());
        }
        preamble(&mut csv, cfg, &extra);
        csv.raw_line(TraceRow::CSV_HEADER);
        for row in &trace.rows {
            csv.record(row.csv_fields());
        }
        let path = out_dir.join(format!("trace_{r:03}.csv"));
        csv.write_to(&path)?;
        files.push(path);
    }

    // Aggregate medians and quartiles across runs, keyed by iteration.
    let mut by_k: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for trace in &traces {
        for row in &trace.rows {
            by_k.entry(row.k).or_default().push((row.eps_x, row.eps_y));
        }
    }
    let mut csv = CsvFile::new();
    preamble(&mut csv, cfg, &[format!("runs = {reps}")]);
    csv.raw_line("k,runs,eps_x_median,eps_x_q1,eps_x_q3,eps_y_median,eps_y_q1,eps_y_q3");
    for (k, values) in &by_k {
        let mut xs: Vec<f64> = values.iter().map(|v| v.0).collect();
        let mut ys: Vec<f64> = values.iter().map(|v| v.1).collect();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        csv.record([
            k.to_string(),
            values.len().to_string(),
            float(quantile_sorted(&xs, 0.5)),
            float(quantile_sorted(&xs, 0.25)),
            float(quantile_sorted(&xs, 0.75)),
            float(quantile_sorted(&ys, 0.5)),
            float(quantile_sorted(&ys, 0.25)),
            float(quantile_sorted(&ys, 0.75)),
        ]);
    }
    let agg_path = out_dir.join("aggregate.csv");
    csv.write_to(&agg_path)?;
    files.push(agg_path);

    let final_metrics = traces
        .iter()
        .map(|t| final_errors(&problem, t))
        .collect::<Result<Vec<_>>>()?;

    Ok(ConvergenceOutcome {
        traces,
        final_metrics,
        files,
    })
}

fn final_errors(problem: &ConstrainedMinimaxProblem, trace: &RunTrace) -> Result<(f64, f64)> {
    // Recover the run's initial point from the first recorded row when
    // available; otherwise fall back to the final state (errors relative to
    // an unknown init are not recoverable). Runs made by this module always
    // record row zero unless diagnostics are disabled.
    let s = &trace.final_state;
    let norm = ErrorNormalizer::new(problem, &trace.x0, &trace.y0)?;
    Ok(norm.eval(problem, &s.x, &s.y)?)
}

pub struct BasinCell {
    pub x0: (f64, f64),
    pub class: BasinClass,
    pub e_opt: f64,
    pub e_spur: f64,
}

pub struct BasinOutcome {
    pub cells: Vec<BasinCell>,
    pub file: PathBuf,
}

/// Runs the configured solver from every grid point `x0` (with fixed `y0`)
/// and classifies each final iterate against the registered stationary
/// points. Rows are ordered lexicographically by `(x0_1, x0_2)`.
pub fn run_basin_grid(cfg: &Config, out_dir: &Path, threads: usize) -> Result<BasinOutcome> {
    let problem = build_problem(cfg)?;
    let solver = build_solver(cfg)?;
    let reference = problem
        .reference()
        .filter(|r| !r.spurious_points.is_empty());
    if reference.is_none() {
        bail!("basin experiment needs a problem with registered spurious points");
    }
    if problem.dim_x() != 2 {
        bail!("basin grid is defined for two-dimensional x");
    }
    let lo = cfg.f64_or("grid.min", -0.75)?;
    let hi = cfg.f64_or("grid.max", 0.75)?;
    let resolution = cfg.usize_or("grid.resolution", 9)?;
    if resolution < 2 {
        bail!("grid.resolution must be at least 2");
    }
    let y0_value = cfg.f64_or("grid.y0", 0.0)?;
    let radius = cfg.f64_or("basin.radius", 0.1)?;
    let stop = StopCriteria {
        max_iters: cfg.usize_or("basin.max_iters", 10_000)?,
        target_eps: None,
        residual_tol: Some(cfg.f64_or("basin.residual_tol", 1e-6)?),
    };
    let base_seed = cfg.u64_or("seed", 0)?;
    cfg.reject_unknown()?;

    let axis: Vec<f64> = (0..resolution)
        .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
        .collect();
    let mut grid = Vec::new();
    for &a in &axis {
        for &b in &axis {
            grid.push((a, b));
        }
    }

    let jobs: Vec<_> = grid
        .iter()
        .enumerate()
        .map(|(idx, &(a, b))| {
            let problem = &problem;
            let solver = &solver;
            move || {
                let init_x = InitPolicy::Vector(vec![a, b]);
                let init_y = InitPolicy::Scalar(y0_value);
                let trace = run_once(
                    problem,
                    solver,
                    &init_x,
                    &init_y,
                    base_seed + idx as u64,
                    &stop,
                    MeritConfig::disabled(),
                )?;
                let s = &trace.final_state;
                let (class, errors) = classify_basin(problem, &s.x, &s.y, radius)?;
                Ok(BasinCell {
                    x0: (a, b),
                    class,
                    e_opt: errors.e_opt,
                    e_spur: errors.e_spur,
                })
            }
        })
        .collect();
    let cells = run_parallel(jobs, threads)?;

    let mut csv = CsvFile::new();
    preamble(&mut csv, cfg, &[format!("solver = {}", solver.name())]);
    csv.raw_line("x0_1,x0_2,class,e_opt,e_spur");
    for cell in &cells {
        csv.record([
            float(cell.x0.0),
            float(cell.x0.1),
            cell.class.to_string(),
            float(cell.e_opt),
            float(cell.e_spur),
        ]);
    }
    let file = out_dir.join("basin.csv");
    csv.write_to(&file)?;

    Ok(BasinOutcome { cells, file })
}

pub struct AblationRow {
    pub variant: String,
    pub runs: usize,
    pub successes: usize,
    /// Mean iterations to target over all runs; runs that exhausted the
    /// budget count at the budget.
    pub mean_iterations: f64,
    pub std_iterations: f64,
}

pub struct AblationOutcome {
    pub rows: Vec<AblationRow>,
    pub file: PathBuf,
}

fn apply_variant(base: &Schedule, token: &str) -> Result<Schedule> {
    let (key, value) = token
        .split_once('=')
        .with_context(|| format!("variant `{token}`: expected key=value"))?;
    let mut s = *base;
    match key.trim() {
        "alpha0" => s.alpha0 = value.trim().parse()?,
        "beta0" => s.beta0 = value.trim().parse()?,
        "rho0" => s.rho0 = value.trim().parse()?,
        "ts" => {
            let (t, sv) = value
                .split_once(',')
                .with_context(|| format!("variant `{token}`: ts needs `t,s`"))?;
            s.t = t.trim().parse()?;
            s.s = sv.trim().parse()?;
        }
        other => bail!("variant `{token}`: unknown key `{other}`"),
    }
    Ok(s)
}

/// Runs the base configuration and each variant for `repetitions` seeds
/// until the target error or the budget, and tabulates iteration counts.
pub fn run_ablation(cfg: &Config, out_dir: &Path, threads: usize) -> Result<AblationOutcome> {
    let problem = build_problem(cfg)?;
    let solver = build_solver(cfg)?;
    let SolverSpec::Spaco(base) = &solver else {
        bail!("ablation sweeps schedule hyperparameters and needs solver.name = spaco");
    };
    let (init_x, init_y) = build_inits(cfg)?;
    let reps = cfg.usize_or("repetitions", 10)?;
    let base_seed = cfg.u64_or("seed", 0)?;
    let budget = cfg.usize_or("ablate.budget", 120_000)?;
    let target = cfg.f64_or("stop.target_eps", 1e-4)?;
    let variants_spec = cfg.str_or("ablate.variants", "");
    cfg.reject_unknown()?;

    let mut variants: Vec<(String, Schedule)> = vec![("base".to_string(), *base)];
    for token in variants_spec.split(';') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        variants.push((token.to_string(), apply_variant(base, token)?));
    }

    let stop = StopCriteria {
        max_iters: budget,
        target_eps: Some(target),
        residual_tol: None,
    };

    let mut jobs = Vec::new();
    for (vi, (_, schedule)) in variants.iter().enumerate() {
        for r in 0..reps {
            let problem = &problem;
            let init_x = &init_x;
            let init_y = &init_y;
            let schedule = *schedule;
            jobs.push(move || {
                let trace = run_once(
                    problem,
                    &SolverSpec::Spaco(schedule),
                    init_x,
                    init_y,
                    base_seed + r as u64,
                    &stop,
                    MeritConfig::disabled(),
                )?;
                Ok((
                    vi,
                    trace.final_state.k,
                    trace.stop_reason == StopReason::TargetEps,
                ))
            });
        }
    }
    let results = run_parallel(jobs, threads)?;

    let mut rows = Vec::new();
    for (vi, (name, _)) in variants.iter().enumerate() {
        let counts: Vec<f64> = results
            .iter()
            .filter(|(i, _, _)| *i == vi)
            .map(|(_, k, _)| *k as f64)
            .collect();
        let successes = results
            .iter()
            .filter(|(i, _, ok)| *i == vi && *ok)
            .count();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let var = if counts.len() > 1 {
            counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64
        } else {
            0.0
        };
        rows.push(AblationRow {
            variant: name.clone(),
            runs: counts.len(),
            successes,
            mean_iterations: mean,
            std_iterations: var.sqrt(),
        });
    }

    let mut csv = CsvFile::new();
    preamble(
        &mut csv,
        cfg,
        &["runs capped at the budget count at the budget".to_string()],
    );
    csv.raw_line("variant,runs,successes,mean_iterations,std_iterations");
    for row in &rows {
        csv.record([
            row.variant.clone(),
            row.runs.to_string(),
            row.successes.to_string(),
            float(row.mean_iterations),
            float(row.std_iterations),
        ]);
    }
    let file = out_dir.join("ablation.csv");
    csv.write_to(&file)?;

    Ok(AblationOutcome { rows, file })
}

/// Oracle and property smoke suite over the three benchmarks. Returns the
/// report lines and whether everything passed.
pub fn run_check() -> (Vec<String>, bool) {
    use rand::Rng;
    use rand::SeedableRng;
    use spaco::{check_oracle_consistency, kkt_residual, penalized_grad, PenaltyParams};

    let mut lines = Vec::new();
    let mut all_ok = true;
    let report = |ok: bool, what: String, lines: &mut Vec<String>| {
        lines.push(format!("{} {what}", if ok { "PASS" } else { "FAIL" }));
        ok
    };

    let problems = vec![
        spaco::make_toy2d(),
        spaco::make_nonlinear(8, 0.5, 0).expect("valid"),
        spaco::make_linear(6, 0.5, 1).expect("valid"),
    ];

    for problem in &problems {
        let name = problem.name.clone();
        let oracle = check_oracle_consistency(problem, 20, 1e-6, 1e-5, 42);
        all_ok &= report(
            oracle.passed(),
            format!("{name}: gradients and Jacobians match finite differences ({})", oracle.summary()),
            &mut lines,
        );

        if let Some(reference) = problem.reference() {
            let mut worst: f64 = 0.0;
            let mut points = reference.spurious_points.clone();
            if let Some(t) = reference.true_triplet() {
                points.push(t);
            }
            for p in &points {
                worst = worst.max(kkt_residual(problem, &p.x, &p.y, &p.lambda));
            }
            all_ok &= report(
                worst <= 1e-9,
                format!("{name}: registered stationary points have zero KKT residual (max {worst:.2e})"),
                &mut lines,
            );
        }

        // Strong concavity of the regularized inner problem.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pen = PenaltyParams::new(1.0, 0.1).expect("valid");
        let mut ok = true;
        for _ in 0..50 {
            let x = problem.set_x().sample_uniform(&mut rng);
            let y1 = problem.set_y().sample_uniform(&mut rng);
            let y2 = problem.set_y().sample_uniform(&mut rng);
            let (_, g1) = penalized_grad(problem, &x, &y1, &pen);
            let (_, g2) = penalized_grad(problem, &x, &y2, &pen);
            let lhs = (g1 - g2).dot(&(&y1 - &y2));
            let bound = -pen.sigma * (&y1 - &y2).norm_squared();
            ok &= lhs <= bound + 1e-9 * (1.0 + bound.abs());
        }
        all_ok &= report(
            ok,
            format!("{name}: inner gradients satisfy the strong concavity inequality"),
            &mut lines,
        );

        // Projection sanity on random points.
        let mut ok = true;
        for _ in 0..100 {
            let z = DVector::from_fn(problem.dim_y(), |_, _| rng.random_range(-30.0..30.0));
            let p = problem.set_y().project(&z);
            ok &= problem.set_y().contains(&p, 0.0);
            ok &= problem.set_y().project(&p) == p;
        }
        all_ok &= report(
            ok,
            format!("{name}: projection is idempotent and lands inside the box"),
            &mut lines,
        );
    }

    let check = Schedule::default_nonlinear().validate();
    all_ok &= report(
        check.ok(),
        format!(
            "schedule defaults satisfy the exponent conditions ({} advisory warning(s))",
            check.warnings.len()
        ),
        &mut lines,
    );
    let bad = Schedule {
        t: 0.1,
        s: 0.25,
        ..Schedule::default_nonlinear()
    };
    all_ok &= report(
        !bad.validate().ok(),
        "schedule validation rejects s <= 3t".to_string(),
        &mut lines,
    );

    (lines, all_ok)
}
