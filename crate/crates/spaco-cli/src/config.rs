//! Flat key-value experiment configuration.
//!
//! One file per experiment; lines are `section.key = value`, `#` starts a
//! comment. Unknown keys are rejected so typos surface immediately. Every
//! key and its default is documented in `KEY_REFERENCE` (printed by
//! `--help`).

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

/// Documentation for every accepted key, printed with `--help`.
pub const KEY_REFERENCE: &str = "\
Configuration keys (flat `key = value` lines, `#` comments):
  problem.name            toy2d | nonlinear | linear        (default toy2d)
  problem.n               dimension for nonlinear/linear    (default 100)
  problem.delta           gradient noise level              (default 1.0)
  problem.seed            seed for generated problem data   (default 0)
  solver.name             spaco | gda_fp | minminmax        (default spaco)
  schedule.rho0           penalty base                      (default 10)
  schedule.sigma0         regularization base               (default 1e-4)
  schedule.alpha0         x-stepsize base                   (default 0.1)
  schedule.beta0          y-stepsize base                   (default 0.1)
  schedule.eta0           momentum base, in (0, 1]          (default 0.25)
  schedule.t              penalty growth exponent           (default 0.05)
  schedule.s              stepsize decay exponent           (default 0.2)
  schedule.lipschitz_guard  clamp beta_k to 1/(guard*rho_k) (default unset)
  solver.rho              fixed penalty weight (gda_fp)     (default 20)
  solver.alpha            x stepsize (gda_fp, minminmax)    (default 0.001 / 0.01)
  solver.beta             y stepsize (gda_fp, minminmax)    (default 0.01)
  solver.gamma            multiplier stepsize (minminmax)   (default 0.1)
  solver.inner_steps      ascent steps per outer iteration  (default 1)
  solver.lambda0          initial multiplier (minminmax)    (default 1.0)
  solver.lambda_cap       multiplier cap (minminmax)        (default 1e6)
  init.x                  uniform | zero | center | scalar | v1,v2,...
                                                            (default uniform)
  init.x_lo, init.x_hi    range for init.x = uniform        (default problem box)
  init.y                  as init.x                         (default uniform)
  init.y_lo, init.y_hi    range for init.y = uniform        (default problem box)
  stop.max_iters          iteration budget                  (default 10000)
  stop.target_eps         stop when max(eps_x, eps_y) <= v  (default unset)
  stop.residual_tol       stop when KKT residual <= v       (default unset)
  diag.stride             record a row every v iterations   (default 10)
  diag.inner_tol          inner-solve tolerance for rows    (default 1e-4)
  diag.merit              true | false                      (default false)
  diag.kkt                true | false                      (default false)
  diag.gap_samples        sample count, 0 disables          (default 0)
  repetitions             independent runs                  (default 1)
  seed                    base seed; run r uses seed + r    (default 0)
  out_dir                 output directory                  (default out)
  grid.min, grid.max      basin grid bounds                 (default -0.75, 0.75)
  grid.resolution         points per axis, >= 2             (default 9)
  grid.y0                 fixed initial y (scalar)          (default 0)
  basin.radius            classification radius             (default 0.1)
  basin.max_iters         per-cell budget                   (default 10000)
  basin.residual_tol      per-cell KKT stop                 (default 1e-6)
  ablate.budget           per-run iteration cap             (default 120000)
  ablate.variants         semicolon-separated overrides, e.g.
                          alpha0=0.05; rho0=20; ts=0.07,0.28
";

/// Raw parsed key-value map with typed accessors that record which keys
/// were consumed.
pub struct Config {
    values: BTreeMap<String, String>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{raw}`", lineno + 1))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                bail!("line {}: empty key", lineno + 1);
            }
            if values.insert(key.clone(), value).is_some() {
                bail!("line {}: duplicate key `{key}`", lineno + 1);
            }
        }
        Ok(Self {
            values,
            consumed: Default::default(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn empty() -> Self {
        Self {
            values: BTreeMap::new(),
            consumed: Default::default(),
        }
    }

    /// Overrides or inserts a value (used by CLI flags).
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        let v = self.values.get(key).map(|s| s.as_str());
        if v.is_some() {
            self.consumed.borrow_mut().insert(key.to_string());
        }
        v
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .with_context(|| format!("key `{key}`: expected a number, got `{s}`")),
        }
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => Ok(Some(
                s.parse()
                    .with_context(|| format!("key `{key}`: expected a number, got `{s}`"))?,
            )),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .with_context(|| format!("key `{key}`: expected an integer, got `{s}`")),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .with_context(|| format!("key `{key}`: expected an integer, got `{s}`")),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(s) => bail!("key `{key}`: expected true or false, got `{s}`"),
        }
    }

    /// Fails if any key was never consumed by an accessor: catches typos
    /// and keys that do not apply to the chosen experiment.
    pub fn reject_unknown(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        let unknown: Vec<&String> = self
            .values
            .keys()
            .filter(|k| !consumed.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            bail!(
                "unknown or unused config keys: {}",
                unknown
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        }
    }

    /// Deterministic `key = value` echo for output preambles.
    pub fn echo(&self) -> Vec<String> {
        self.values
            .iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect()
    }
}
