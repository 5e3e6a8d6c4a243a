//! Problem abstraction: feasible boxes, the deterministic/stochastic oracle
//! bundle, analytic references, and the oracle consistency checker.
//!
//! A problem is immutable once constructed and can be shared freely across
//! threads; randomness lives in the per-run noise stream, never in the
//! problem itself.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Axis-aligned box `[lower, upper]` hosting the projection operator.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxSet {
    /// Requires `lower[i] <= upper[i]` for all `i`.
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for i in 0..lower.len() {
            if !(lower[i] <= upper[i]) {
                return Err(Error::InvalidParameter(format!(
                    "box bound {i}: lower {} > upper {}",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(dim, lo),
            DVector::from_element(dim, hi),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    /// Componentwise clamp of `z` into the box. Idempotent and nonexpansive.
    ///
    /// Panics on dimension mismatch: that is a programming error, not a
    /// recoverable condition.
    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        assert_eq!(
            z.len(),
            self.dim(),
            "projection dimension mismatch: point has {}, box has {}",
            z.len(),
            self.dim()
        );
        DVector::from_fn(z.len(), |i, _| z[i].clamp(self.lower[i], self.upper[i]))
    }

    /// Membership test with slack `tol >= 0`.
    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        z.len() == self.dim()
            && (0..z.len()).all(|i| z[i] >= self.lower[i] - tol && z[i] <= self.upper[i] + tol)
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    /// Largest Euclidean norm attained on the box (a corner).
    pub fn max_norm(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.lower[i].abs().max(self.upper[i].abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Uniform sample from the box.
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            rng.random_range(self.lower[i]..=self.upper[i])
        })
    }
}

/// Kind of each scalar constraint component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `c_i(x, y) <= 0`
    Inequality,
    /// `c_i(x, y) = 0`
    Equality,
}

/// One realization of the oracle noise: a vector of independent standard
/// normal entries. Evaluating the stochastic gradient twice with the same
/// draw reuses the same underlying randomness (the simultaneous-query
/// contract), so draws can be shared across evaluation points.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    values: DVector<f64>,
}

impl NoiseDraw {
    pub fn standard_normal<R: Rng>(rng: &mut R, dim: usize) -> Self {
        Self {
            values: DVector::from_fn(dim, |_, _| rng.sample(StandardNormal)),
        }
    }

    /// A zero draw, for deterministic evaluation paths.
    pub fn zero(dim: usize) -> Self {
        Self {
            values: DVector::zeros(dim),
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }
}

/// A registered stationary point of a benchmark, with its multiplier.
#[derive(Debug, Clone)]
pub struct StationaryPoint {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub lambda: DVector<f64>,
}

type YStarFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type PhiFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// Known exact solutions for a benchmark problem.
pub struct AnalyticReference {
    /// Outer solution `x*`.
    pub x_star: DVector<f64>,
    /// Inner solution at the outer solution, `y* = y*(x*)`.
    pub y_star: DVector<f64>,
    /// Multiplier at the true solution, when known.
    pub lambda_star: Option<DVector<f64>>,
    /// Exact solution of the constrained inner maximization at any `x`.
    pub y_star_of: Box<YStarFn>,
    /// Stationary points that are not local solutions.
    pub spurious_points: Vec<StationaryPoint>,
    /// Exact value function, when known in closed form.
    pub phi_value: Option<Box<PhiFn>>,
}

impl AnalyticReference {
    pub fn y_star_of(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.y_star_of)(x)
    }

    pub fn phi_value(&self, x: &DVector<f64>) -> Option<f64> {
        self.phi_value.as_ref().map(|f| f(x))
    }

    /// The true stationary triplet, when the multiplier is registered.
    pub fn true_triplet(&self) -> Option<StationaryPoint> {
        self.lambda_star.as_ref().map(|l| StationaryPoint {
            x: self.x_star.clone(),
            y: self.y_star.clone(),
            lambda: l.clone(),
        })
    }
}

type ValueFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync;
type SampleGradFn = dyn Fn(&DVector<f64>, &DVector<f64>, &NoiseDraw) -> (DVector<f64>, DVector<f64>)
    + Send
    + Sync;
type ConstraintFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
type JacobianFn =
    dyn Fn(&DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync;

/// Oracle bundle for `min_x max_y { f(x,y) | c(x,y) <= 0, x in X, y in Y }`
/// with `f` observed through an unbiased stochastic gradient oracle and `c`
/// deterministic.
pub struct ConstrainedMinimaxProblem {
    pub name: String,
    dim_x: usize,
    dim_y: usize,
    num_constraints: usize,
    set_x: BoxSet,
    set_y: BoxSet,
    f: Box<ValueFn>,
    grad_f: Box<GradFn>,
    sample_grad: Box<SampleGradFn>,
    c: Box<ConstraintFn>,
    c_jac: Box<JacobianFn>,
    kinds: Vec<ConstraintKind>,
    noise_dim: usize,
    noise_level: f64,
    reference: Option<AnalyticReference>,
}

/// Builder-style constructor arguments for [`ConstrainedMinimaxProblem`].
pub struct ProblemParts {
    pub name: String,
    pub set_x: BoxSet,
    pub set_y: BoxSet,
    pub f: Box<ValueFn>,
    pub grad_f: Box<GradFn>,
    pub sample_grad: Box<SampleGradFn>,
    pub c: Box<ConstraintFn>,
    pub c_jac: Box<JacobianFn>,
    pub kinds: Vec<ConstraintKind>,
    pub noise_dim: usize,
    pub noise_level: f64,
    pub reference: Option<AnalyticReference>,
}

impl ConstrainedMinimaxProblem {
    pub fn new(parts: ProblemParts) -> Self {
        Self {
            name: parts.name,
            dim_x: parts.set_x.dim(),
            dim_y: parts.set_y.dim(),
            num_constraints: parts.kinds.len(),
            set_x: parts.set_x,
            set_y: parts.set_y,
            f: parts.f,
            grad_f: parts.grad_f,
            sample_grad: parts.sample_grad,
            c: parts.c,
            c_jac: parts.c_jac,
            kinds: parts.kinds,
            noise_dim: parts.noise_dim,
            noise_level: parts.noise_level,
            reference: parts.reference,
        }
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    pub fn set_x(&self) -> &BoxSet {
        &self.set_x
    }

    pub fn set_y(&self) -> &BoxSet {
        &self.set_y
    }

    pub fn constraint_kinds(&self) -> &[ConstraintKind] {
        &self.kinds
    }

    /// Length of one noise draw consumed by the stochastic gradient oracle.
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// The variance scale `delta` of the gradient noise.
    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn reference(&self) -> Option<&AnalyticReference> {
        self.reference.as_ref()
    }

    pub fn f_value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (self.f)(x, y)
    }

    pub fn grad_f(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (self.grad_f)(x, y)
    }

    /// Stochastic gradient of `F(x, y; xi)` for the given draw. Deterministic
    /// as a function of `(x, y, draw)`.
    pub fn sample_grad_f(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        draw: &NoiseDraw,
    ) -> (DVector<f64>, DVector<f64>) {
        (self.sample_grad)(x, y, draw)
    }

    pub fn c_value(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        (self.c)(x, y)
    }

    /// Jacobians `(dc/dx, dc/dy)` with one row per constraint component.
    pub fn c_jacobians(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.c_jac)(x, y)
    }

    /// Draws one noise realization from `rng`, advancing the stream by
    /// exactly `noise_dim` normal variates.
    pub fn draw_noise<R: Rng>(&self, rng: &mut R) -> NoiseDraw {
        NoiseDraw::standard_normal(rng, self.noise_dim)
    }
}

/// Outcome of finite-difference validation of the analytic oracles.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub num_points: usize,
    pub tol: f64,
    /// Max relative error per block, with the index of the worst point.
    pub grad_x_err: (f64, usize),
    pub grad_y_err: (f64, usize),
    pub jac_x_err: (f64, usize),
    pub jac_y_err: (f64, usize),
    /// Zero-noise problems only: deviation of the sampled gradient from the
    /// deterministic one (must be exactly zero).
    pub sample_vs_det_err: Option<f64>,
    /// Non-finite oracle outputs, with their location.
    pub failures: Vec<String>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
            && self.grad_x_err.0 <= self.tol
            && self.grad_y_err.0 <= self.tol
            && self.jac_x_err.0 <= self.tol
            && self.jac_y_err.0 <= self.tol
            && self.sample_vs_det_err.is_none_or(|e| e == 0.0)
    }

    pub fn summary(&self) -> String {
        format!(
            "grad_x {:.3e} (pt {}), grad_y {:.3e} (pt {}), jac_x {:.3e} (pt {}), jac_y {:.3e} (pt {}), failures {}",
            self.grad_x_err.0,
            self.grad_x_err.1,
            self.grad_y_err.0,
            self.grad_y_err.1,
            self.jac_x_err.0,
            self.jac_x_err.1,
            self.jac_y_err.0,
            self.jac_y_err.1,
            self.failures.len()
        )
    }
}

fn rel_err(analytic: &DVector<f64>, fd: &DVector<f64>) -> f64 {
    (analytic - fd).norm() / (1.0 + fd.norm())
}

/// Sample a point in the open interior of the box (uniform, then pulled
/// slightly toward the center so finite differences stay inside).
fn interior_sample<R: Rng>(set: &BoxSet, rng: &mut R) -> DVector<f64> {
    let z = set.sample_uniform(rng);
    let c = set.center();
    &c + (z - &c) * (1.0 - 1e-3)
}

/// Compares `grad_f` and `c_jacobians` against central finite differences of
/// `f_value` / `c_value` at `num_points` random interior points of `X x Y`.
///
/// Passes iff every block's max relative error is at most `tol` and every
/// oracle output was finite.
pub fn check_oracle_consistency(
    problem: &ConstrainedMinimaxProblem,
    num_points: usize,
    fd_step: f64,
    tol: f64,
    seed: u64,
) -> OracleReport {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let mut report = OracleReport {
        num_points,
        tol,
        grad_x_err: (0.0, 0),
        grad_y_err: (0.0, 0),
        jac_x_err: (0.0, 0),
        jac_y_err: (0.0, 0),
        sample_vs_det_err: None,
        failures: Vec::new(),
    };
    let mut sample_dev: f64 = 0.0;

    for pt in 0..num_points {
        let x = interior_sample(problem.set_x(), &mut rng);
        let y = interior_sample(problem.set_y(), &mut rng);

        let (gx, gy) = problem.grad_f(&x, &y);
        let (jx, jy) = problem.c_jacobians(&x, &y);
        let fv = problem.f_value(&x, &y);
        if !fv.is_finite() {
            report.failures.push(format!("f_value non-finite at point {pt}"));
            continue;
        }
        for (name, v) in [("grad_f x-block", &gx), ("grad_f y-block", &gy)] {
            if v.iter().any(|t| !t.is_finite()) {
                report.failures.push(format!("{name} non-finite at point {pt}"));
            }
        }
        if jx.iter().any(|t| !t.is_finite()) || jy.iter().any(|t| !t.is_finite()) {
            report.failures.push(format!("c_jacobians non-finite at point {pt}"));
        }
        if !report.failures.is_empty() {
            continue;
        }

        // Central differences of f in x and y.
        let fd_gx = DVector::from_fn(problem.dim_x(), |i, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += fd_step;
            xm[i] -= fd_step;
            (problem.f_value(&xp, &y) - problem.f_value(&xm, &y)) / (2.0 * fd_step)
        });
        let fd_gy = DVector::from_fn(problem.dim_y(), |i, _| {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += fd_step;
            ym[i] -= fd_step;
            (problem.f_value(&x, &yp) - problem.f_value(&x, &ym)) / (2.0 * fd_step)
        });

        // Central differences of c, column by column.
        let p = problem.num_constraints();
        let mut fd_jx = DMatrix::zeros(p, problem.dim_x());
        for i in 0..problem.dim_x() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += fd_step;
            xm[i] -= fd_step;
            let d = (problem.c_value(&xp, &y) - problem.c_value(&xm, &y)) / (2.0 * fd_step);
            fd_jx.set_column(i, &d);
        }
        let mut fd_jy = DMatrix::zeros(p, problem.dim_y());
        for i in 0..problem.dim_y() {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += fd_step;
            ym[i] -= fd_step;
            let d = (problem.c_value(&x, &yp) - problem.c_value(&x, &ym)) / (2.0 * fd_step);
            fd_jy.set_column(i, &d);
        }

        let ex = rel_err(&gx, &fd_gx);
        let ey = rel_err(&gy, &fd_gy);
        let ejx = rel_err(
            &DVector::from_column_slice(jx.as_slice()),
            &DVector::from_column_slice(fd_jx.as_slice()),
        );
        let ejy = rel_err(
            &DVector::from_column_slice(jy.as_slice()),
            &DVector::from_column_slice(fd_jy.as_slice()),
        );
        if ex > report.grad_x_err.0 {
            report.grad_x_err = (ex, pt);
        }
        if ey > report.grad_y_err.0 {
            report.grad_y_err = (ey, pt);
        }
        if ejx > report.jac_x_err.0 {
            report.jac_x_err = (ejx, pt);
        }
        if ejy > report.jac_y_err.0 {
            report.jac_y_err = (ejy, pt);
        }

        if problem.noise_level() == 0.0 {
            let draw = NoiseDraw::zero(problem.noise_dim());
            let (sx, sy) = problem.sample_grad_f(&x, &y, &draw);
            sample_dev = sample_dev.max((&sx - &gx).norm()).max((&sy - &gy).norm());
        }
    }

    if problem.noise_level() == 0.0 {
        report.sample_vs_det_err = Some(sample_dev);
    }
    report
}
