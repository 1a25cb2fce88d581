use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and schedules shared by the stationary solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipticConfig {
    /// Regularization levels, strictly decreasing.
    pub eps_schedule: Vec<f64>,
    /// Relative residual tolerance.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Backtracking factor of the line search.
    pub damping: f64,
    /// Sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for EllipticConfig {
    fn default() -> Self {
        EllipticConfig {
            eps_schedule: (1..=8).map(|k| 10f64.powi(-k)).collect(),
            newton_tol: 1e-10,
            max_newton: 200,
            damping: 0.5,
            armijo: 1e-4,
        }
    }
}

impl EllipticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_schedule.is_empty() {
            return Err(Error::Config("eps_schedule must not be empty".into()));
        }
        if self.eps_schedule.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::Config("eps_schedule entries must be positive".into()));
        }
        if self.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("eps_schedule must be strictly decreasing".into()));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::Config("newton_tol must be positive".into()));
        }
        if self.max_newton == 0 {
            return Err(Error::Config("max_newton must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::Config("damping must lie in (0, 1)".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(Error::Config("armijo must lie in (0, 0.5)".into()));
        }
        Ok(())
    }

    pub fn eps_min(&self) -> f64 {
        *self.eps_schedule.last().expect("validated schedule")
    }
}
