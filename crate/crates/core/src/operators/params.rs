use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents and coefficients of `u_t - Δ_p u - Δ_q u = ϑ u^{-δ} + f(x, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub theta: f64,
}

impl ProblemParams {
    /// Validated constructor: `1 < q < p`, `delta > 0`, `theta >= 0`.
    pub fn new(p: f64, q: f64, delta: f64, theta: f64) -> Result<Self> {
        let params = ProblemParams { p, q, delta, theta };
        params.validate(false)?;
        Ok(params)
    }

    /// Same as [`ProblemParams::new`] but also admits `q == p`, which turns the
    /// operator into a multiple of a single p-Laplacian. Only meant for
    /// verification against closed-form solutions.
    pub fn coincident(p: f64, q: f64, delta: f64, theta: f64) -> Result<Self> {
        let params = ProblemParams { p, q, delta, theta };
        params.validate(true)?;
        Ok(params)
    }

    pub fn validate(&self, allow_equal_exponents: bool) -> Result<()> {
        let finite = [self.p, self.q, self.delta, self.theta].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("parameters must be finite".into()));
        }
        let exponents_ok = if allow_equal_exponents {
            1.0 < self.q && self.q <= self.p
        } else {
            1.0 < self.q && self.q < self.p
        };
        if !exponents_ok {
            return Err(Error::InvalidParams(format!(
                "exponents must satisfy 1<q<p, got p={}, q={}",
                self.p, self.q
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParams(format!(
                "singular exponent must satisfy 0<delta, got delta={}",
                self.delta
            )));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "singular coefficient must satisfy theta>=0, got theta={}",
                self.theta
            )));
        }
        Ok(())
    }

    /// Critical singular exponent `2 + 1/(p-1)`.
    pub fn delta_crit(&self) -> f64 {
        2.0 + 1.0 / (self.p - 1.0)
    }

    /// Boundary growth exponent `p/(p-1+delta)`.
    pub fn tau(&self) -> f64 {
        self.p / (self.p - 1.0 + self.delta)
    }

    /// Gradient integrability threshold `(p-1+delta)/(delta-1)`; infinite for `delta <= 1`.
    pub fn m_crit(&self) -> f64 {
        if self.delta > 1.0 {
            (self.p - 1.0 + self.delta) / (self.delta - 1.0)
        } else {
            f64::INFINITY
        }
    }

    pub fn is_subcritical(&self) -> bool {
        self.delta < self.delta_crit()
    }

    /// Rejects `delta >= 2 + 1/(p-1)`, the range where finite-energy solutions are lost.
    pub fn require_subcritical(&self) -> Result<()> {
        if self.is_subcritical() {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "singular exponent must satisfy 0<delta<2+1/(p-1) (= {:.6}), got delta={}",
                self.delta_crit(),
                self.delta
            )))
        }
    }
}
