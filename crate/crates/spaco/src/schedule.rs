//! Per-iteration parameter schedules.
//!
//! All quantities follow power laws in the (1-based) schedule index `k`:
//! the penalty weight grows as `rho0 * k^t`, the regularization shrinks as
//! `sigma0 * k^-t`, stepsizes and the momentum weight decay as
//! `alpha0 * k^-(6t+s)`, `beta0 * k^-(t+s)`, `eta0 * k^-s`, and the merit
//! coefficients decay as `k^-2t`, `k^-3t`, `k^-7t`, `k^-4t`.
//!
//! The main solver loop counts iterations from zero; schedules are
//! evaluated at index `k + 1` so that every power law is defined from the
//! first step while keeping the same asymptotics.

use crate::error::{Error, Result};

/// Base constants and exponents generating the per-iteration parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub rho0: f64,
    pub sigma0: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub eta0: f64,
    /// Penalty growth exponent.
    pub t: f64,
    /// Stepsize/momentum decay exponent.
    pub s: f64,
    /// Optional growth-constant estimate used to clamp `beta_k` to
    /// `1 / (guard * rho_k)`.
    pub lipschitz_guard: Option<f64>,
}

impl Schedule {
    /// Defaults matching the tuned configuration for the nonlinear
    /// benchmark: `rho0=10, alpha0=beta0=0.1, sigma0=1e-4, t=0.05, s=0.2`.
    /// The momentum base `eta0 = 0.25` keeps the direction estimator stable
    /// across the stepsize range used by the ablation study.
    pub fn default_nonlinear() -> Self {
        Self {
            rho0: 10.0,
            sigma0: 1e-4,
            alpha0: 0.1,
            beta0: 0.1,
            eta0: 0.25,
            t: 0.05,
            s: 0.2,
            lipschitz_guard: None,
        }
    }

    /// Tuned configuration for the linear-constraint benchmark:
    /// `rho0=20, alpha0=0.01, beta0=0.1, sigma0=1e-4`, same exponents.
    pub fn default_linear() -> Self {
        Self {
            rho0: 20.0,
            alpha0: 0.01,
            ..Self::default_nonlinear()
        }
    }

    /// Checks the exponent and positivity conditions.
    ///
    /// Violations of the required tier invalidate the schedule. The
    /// asymptotic-stationarity condition `2s + 5t > 1` is advisory only:
    /// the tuned configurations themselves do not satisfy it, so failing
    /// it produces a warning rather than a rejection.
    pub fn validate(&self) -> ScheduleCheck {
        let mut violations = Vec::new();
        let mut warnings = Vec::new();

        for (name, v) in [
            ("rho0", self.rho0),
            ("sigma0", self.sigma0),
            ("alpha0", self.alpha0),
            ("beta0", self.beta0),
            ("eta0", self.eta0),
        ] {
            if !(v > 0.0) {
                violations.push(format!("{name} must be positive, got {v}"));
            }
        }
        if self.eta0 > 1.0 {
            violations.push(format!("eta0 must be at most 1, got {}", self.eta0));
        }
        if !(self.t > 0.0 && self.t < 1.0) {
            violations.push(format!("t must lie in (0, 1), got {}", self.t));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            violations.push(format!("s must lie in (0, 1), got {}", self.s));
        }
        if !(self.s > 3.0 * self.t) {
            violations.push(format!("s > 3t required, got s={}, 3t={}", self.s, 3.0 * self.t));
        }
        if !(8.0 * self.t + self.s < 1.0) {
            violations.push(format!(
                "8t + s < 1 required, got {}",
                8.0 * self.t + self.s
            ));
        }
        if let Some(g) = self.lipschitz_guard {
            if !(g > 0.0) {
                violations.push(format!("lipschitz_guard must be positive, got {g}"));
            }
        }
        if violations.is_empty() && !(2.0 * self.s + 5.0 * self.t > 1.0) {
            warnings.push(format!(
                "2s + 5t = {} is not > 1: asymptotic-stationarity guarantee not covered",
                2.0 * self.s + 5.0 * self.t
            ));
        }
        ScheduleCheck {
            violations,
            warnings,
        }
    }

    pub fn validated(self) -> Result<Self> {
        let check = self.validate();
        if check.ok() {
            Ok(self)
        } else {
            Err(Error::InvalidSchedule(check.violations.join("; ")))
        }
    }

    /// All nine per-iteration quantities at schedule index `k >= 1`.
    ///
    /// `sigma_k` is derived as `(rho0 * sigma0) / rho_k`, the correctly
    /// rounded value that pins the product `rho_k * sigma_k` to
    /// `rho0 * sigma0` up to the last bit of double precision. When
    /// `lipschitz_guard` is set, `beta_k` is clamped to
    /// `1 / (guard * rho_k)`; the merit coefficients always come from the
    /// unclamped power laws.
    ///
    /// Panics if `k == 0`: the power laws are undefined there.
    pub fn params_at(&self, k: usize) -> IterParams {
        assert!(k >= 1, "schedule index must be at least 1, got {k}");
        let kf = k as f64;
        let kt = kf.powf(self.t);
        let rho = self.rho0 * kt;
        let sigma = (self.rho0 * self.sigma0) / rho;
        let mut beta = self.beta0 * kf.powf(-self.t - self.s);
        if let Some(guard) = self.lipschitz_guard {
            beta = beta.min(1.0 / (guard * rho));
        }
        IterParams {
            k,
            rho,
            sigma,
            alpha: self.alpha0 * kf.powf(-6.0 * self.t - self.s),
            beta,
            eta: self.eta0 * kf.powf(-self.s),
            a: kf.powf(-2.0 * self.t),
            b: kf.powf(-3.0 * self.t),
            c: kf.powf(-7.0 * self.t),
            d: kf.powf(-4.0 * self.t),
        }
    }
}

/// Structured result of [`Schedule::validate`].
#[derive(Debug, Clone)]
pub struct ScheduleCheck {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ScheduleCheck {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Parameters for one iteration: stepsizes, penalty/regularization weights,
/// momentum weight, and merit coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterParams {
    /// Schedule index (1-based).
    pub k: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl IterParams {
    pub fn penalty(&self) -> crate::penalty::PenaltyParams {
        crate::penalty::PenaltyParams {
            rho: self.rho,
            sigma: self.sigma,
        }
    }
}
