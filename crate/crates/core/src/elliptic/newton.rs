//! Damped Newton minimization of the discrete stationary functional
//!
//! ```text
//! Φ(u) = c0/2 ∫u² + kp E_p(u) + kq E_q(u) - s ∫G_ε(u) - l/q ∫u^q - ∫rhs·u
//! ```
//!
//! whose interior stationarity condition is
//! `c0 u - kp Δ_p u - kq Δ_q u - s (u+ε)^{-δ} - l u^{q-1} = rhs`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::BandedSpd;
use crate::mesh::Mesh;
use crate::operators::pq::{accumulate_flux, accumulate_flux_magnitude, accumulate_hessian, regularized_energy};
use crate::operators::{Field, ProblemParams};

use super::EllipticConfig;

/// One instance of the generic stationary equation.
#[derive(Debug, Clone)]
pub struct StationaryProblem {
    mesh: Arc<Mesh>,
    pub p: f64,
    pub q: f64,
    /// Zero-order (mass) coefficient.
    pub c0: f64,
    pub kp: f64,
    pub kq: f64,
    /// Coefficient of `(u+ε)^{-δ}`.
    pub sing: f64,
    pub delta: f64,
    pub eps: f64,
    /// Coefficient of `u^{q-1}` on the right.
    pub lin: f64,
    rhs: Vec<f64>,
}

/// Convergence record of one Newton solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual: f64,
    pub scale: f64,
    pub history: Vec<f64>,
}

/// Interior residual of the strong form.
///
/// `scale` is the largest nodal sum of the absolute values of all terms,
/// fluxes counted before they cancel.
#[derive(Debug, Clone)]
pub struct Residual {
    pub values: Vec<f64>,
    pub max: f64,
    pub scale: f64,
}

impl StationaryProblem {
    /// `-Δ_p u - Δ_q u = 0` with the exponents of `params`; adjust with the setters.
    pub fn new(mesh: Arc<Mesh>, params: &ProblemParams) -> StationaryProblem {
        let n = mesh.len();
        StationaryProblem {
            mesh,
            p: params.p,
            q: params.q,
            c0: 0.0,
            kp: 1.0,
            kq: 1.0,
            sing: 0.0,
            delta: params.delta,
            eps: 0.0,
            lin: 0.0,
            rhs: vec![0.0; n],
        }
    }

    pub fn mass(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn diffusion(mut self, kp: f64, kq: f64) -> Self {
        self.kp = kp;
        self.kq = kq;
        self
    }

    pub fn singular(mut self, coef: f64, eps: f64) -> Self {
        self.sing = coef;
        self.eps = eps;
        self
    }

    pub fn power_source(mut self, l: f64) -> Self {
        self.lin = l;
        self
    }

    pub fn rhs(mut self, rhs: Vec<f64>) -> Self {
        assert_eq!(rhs.len(), self.mesh.len());
        self.rhs = rhs;
        self
    }

    pub fn constant_rhs(mut self, c: f64) -> Self {
        self.rhs = vec![c; self.mesh.len()];
        self
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        let mut s = self.clone();
        s.eps = eps;
        s
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn rhs_values(&self) -> &[f64] {
        &self.rhs
    }

    /// Iterates are clipped to `u >= 0` for a bare power source. With a
    /// singular term the energy is finite on `u > -ε` and its barrier keeps
    /// the line search inside; clipping there would pin nodes whose
    /// regularized root is negative and stall Newton.
    fn constrained(&self) -> bool {
        self.sing == 0.0 && self.lin != 0.0
    }

    fn g_eps(&self, v: f64) -> f64 {
        let z = v + self.eps;
        if !(z > 0.0) {
            return f64::NAN;
        }
        if self.delta == 1.0 {
            z.ln()
        } else {
            z.powf(1.0 - self.delta) / (1.0 - self.delta)
        }
    }

    fn eta(&self) -> f64 {
        self.mesh.grad_regularization()
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        let mesh = &*self.mesh;
        let eta = self.eta();
        let mut e = 0.0;
        if self.kp != 0.0 {
            e += self.kp * regularized_energy(mesh, u, self.p, eta);
        }
        if self.kq != 0.0 {
            e += self.kq * regularized_energy(mesh, u, self.q, eta);
        }
        let w = mesh.quad_weights();
        for &k in mesh.interior() {
            let v = u[k];
            let mut t = 0.5 * self.c0 * v * v - self.rhs[k] * v;
            if self.sing != 0.0 {
                t -= self.sing * self.g_eps(v);
            }
            if self.lin != 0.0 {
                t -= self.lin * v.max(0.0).powf(self.q) / self.q;
            }
            e += w[k] * t;
        }
        if e.is_nan() {
            f64::INFINITY
        } else {
            e
        }
    }

    fn pointwise(&self, v: f64) -> (f64, f64, f64) {
        let s = if self.sing != 0.0 { self.sing * (v + self.eps).powf(-self.delta) } else { 0.0 };
        let l = if self.lin != 0.0 { self.lin * v.max(0.0).powf(self.q - 1.0) } else { 0.0 };
        (self.c0 * v, s, l)
    }

    /// Nodal gradient of `Φ` (boundary entries are zero).
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mesh = &*self.mesh;
        let eta = self.eta();
        let mut g = vec![0.0; mesh.len()];
        accumulate_flux(mesh, u, self.p, self.kp, eta, &mut g);
        accumulate_flux(mesh, u, self.q, self.kq, eta, &mut g);
        let w = mesh.quad_weights();
        for k in 0..mesh.len() {
            if mesh.is_boundary(k) {
                g[k] = 0.0;
            } else {
                let (m, s, l) = self.pointwise(u[k]);
                g[k] += w[k] * (m - s - l - self.rhs[k]);
            }
        }
        g
    }

    pub fn residual(&self, u: &[f64]) -> Residual {
        let mesh = &*self.mesh;
        let eta = self.eta();
        let mut ap = vec![0.0; mesh.len()];
        let mut aq = vec![0.0; mesh.len()];
        accumulate_flux(mesh, u, self.p, self.kp, eta, &mut ap);
        accumulate_flux(mesh, u, self.q, self.kq, eta, &mut aq);
        let mut mag = vec![0.0; mesh.len()];
        accumulate_flux_magnitude(mesh, u, self.p, self.kp, eta, &mut mag);
        accumulate_flux_magnitude(mesh, u, self.q, self.kq, eta, &mut mag);
        let w = mesh.quad_weights();
        let mut values = vec![0.0; mesh.len()];
        let mut max = 0.0f64;
        let mut scale = 0.0f64;
        for &k in mesh.interior() {
            let (a, b) = (ap[k] / w[k], aq[k] / w[k]);
            let (m, s, l) = self.pointwise(u[k]);
            let r = m + a + b - s - l - self.rhs[k];
            values[k] = r;
            max = if r.is_finite() { max.max(r.abs()) } else { f64::INFINITY };
            let size = m.abs() + s.abs() + l.abs() + self.rhs[k].abs() + mag[k] / w[k];
            if size.is_finite() {
                scale = scale.max(size);
            }
        }
        Residual { values, max, scale }
    }

    pub fn residual_field(&self, u: &Field) -> Field {
        u.with_values(self.residual(u.values()).values)
    }

    fn hessian(&self, u: &[f64], exact: bool) -> BandedSpd {
        let mesh = &*self.mesh;
        let eta = self.eta();
        let mut h = BandedSpd::zeros(mesh.interior().len(), mesh.bandwidth());
        accumulate_hessian(mesh, u, self.p, self.kp, eta, exact, &mut h);
        accumulate_hessian(mesh, u, self.q, self.kq, eta, exact, &mut h);
        let w = mesh.quad_weights();
        for (i, &k) in mesh.interior().iter().enumerate() {
            let mut d = self.c0;
            if self.sing != 0.0 {
                d += self.sing * self.delta * (u[k] + self.eps).powf(-self.delta - 1.0);
            }
            h.add_diag(i, w[k] * d);
        }
        h
    }

    fn admissible(&self, u: &mut [f64]) {
        let mesh = &*self.mesh;
        let clip = self.constrained();
        for (k, v) in u.iter_mut().enumerate() {
            if mesh.is_boundary(k) {
                *v = 0.0;
            } else if clip && *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    /// Minimizes `t ↦ Φ(t·shape)` over a logarithmic range of `t`.
    pub fn ray_guess(&self, shape: &[f64]) -> Vec<f64> {
        let phi = |lt: f64| {
            let t = lt.exp();
            let u: Vec<f64> = shape.iter().map(|s| t * s).collect();
            self.energy(&u)
        };
        let (lo, hi, n) = ((1e-9f64).ln(), (1e6f64).ln(), 90);
        let step = (hi - lo) / n as f64;
        let mut best = (lo, phi(lo));
        for i in 1..=n {
            let x = lo + step * i as f64;
            let v = phi(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        let (mut a, mut b) = (best.0 - step, best.0 + step);
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..40 {
            let c = b - gr * (b - a);
            let d = a + gr * (b - a);
            if phi(c) < phi(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let t = (0.5 * (a + b)).exp();
        shape.iter().map(|s| t * s).collect()
    }

    fn fail(reason: String, iterations: usize, residual: f64, history: Vec<f64>) -> Error {
        Error::SolverFailed { reason, iterations, residual, history }
    }

    /// Backtracking along `d` with the projected sufficient-decrease test.
    fn line_search(
        &self,
        u: &[f64],
        g: &[f64],
        d: &[f64],
        phi: f64,
        min_alpha: f64,
        cfg: &EllipticConfig,
    ) -> Option<(Vec<f64>, f64)> {
        let mesh = &*self.mesh;
        let mut alpha = 1.0;
        while alpha >= min_alpha {
            let mut trial = u.to_vec();
            for (i, &k) in mesh.interior().iter().enumerate() {
                trial[k] += alpha * d[i];
            }
            self.admissible(&mut trial);
            let pred: f64 = mesh.interior().iter().map(|&k| g[k] * (trial[k] - u[k])).sum();
            let val = self.energy(&trial);
            if val.is_finite() && val <= phi + cfg.armijo * pred + 1e-14 * phi.abs() {
                return Some((trial, val));
            }
            alpha *= cfg.damping;
        }
        None
    }

    /// Damped Newton from `init`; returns the minimizer and its statistics.
    pub fn solve(&self, init: Vec<f64>, cfg: &EllipticConfig) -> Result<(Vec<f64>, NewtonStats)> {
        let mesh = &*self.mesh;
        if init.len() != mesh.len() {
            return Err(Error::MeshMismatch);
        }
        if self.sing != 0.0 && !(self.eps > 0.0) {
            return Err(Error::Domain("singular term needs a positive regularization".into()));
        }
        let mut u = init;
        self.admissible(&mut u);
        if self.sing != 0.0 {
            // a start from a coarser regularization may lie past the barrier
            for &k in mesh.interior() {
                if !(u[k] + self.eps > 0.0) {
                    u[k] = -0.5 * self.eps;
                }
            }
        }
        let mut history = Vec::new();
        let mut phi = self.energy(&u);
        for it in 0..=cfg.max_newton {
            let res = self.residual(&u);
            history.push(res.max);
            if !res.max.is_finite() {
                return Err(Self::fail("non-finite residual".into(), it, res.max, history));
            }
            if res.max <= cfg.newton_tol * (1.0 + res.scale) {
                let stats = NewtonStats { iterations: it, residual: res.max, scale: res.scale, history };
                return Ok((u, stats));
            }
            if it == cfg.max_newton {
                break;
            }
            let g = self.gradient(&u);
            let gi: Vec<f64> = mesh.interior().iter().map(|&k| -g[k]).collect();
            // below p = 2 the exact and the majorant directions compete; the
            // lower energy wins
            let singular_exponent = self.p < 2.0 || self.q < 2.0;
            let mut best: Option<(Vec<f64>, f64)> = None;
            let mut reason = String::from("line search stalled");
            let variants: &[bool] = if singular_exponent { &[true, false] } else { &[true] };
            for &exact in variants {
                match self.hessian(&u, exact).factor() {
                    Ok(chol) => {
                        let d = chol.solve(&gi);
                        if let Some((next, val)) = self.line_search(&u, &g, &d, phi, 1e-12, cfg) {
                            if best.as_ref().map_or(true, |b| val < b.1) {
                                best = Some((next, val));
                            }
                        }
                    }
                    Err(Error::SolverFailed { reason: r, .. }) => reason = r,
                    Err(e) => return Err(e),
                }
            }
            match best {
                Some((next, val)) => {
                    u = next;
                    phi = val;
                }
                None => return Err(Self::fail(reason, it, res.max, history)),
            }
        }
        let last = *history.last().unwrap_or(&f64::NAN);
        Err(Self::fail(format!("no convergence in {} iterations", cfg.max_newton), cfg.max_newton, last, history))
    }
}
