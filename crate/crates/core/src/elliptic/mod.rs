//! Stationary singular problems, barriers and the monotone iteration.

mod config;
mod newton;

use std::sync::Arc;

use serde::Serialize;

pub use config::EllipticConfig;
pub use newton::{NewtonStats, Residual, StationaryProblem};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::operators::{Field, Nonlinearity, ProblemParams};

/// Bookkeeping of a (possibly continued) stationary solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub newton_iterations: usize,
    pub residual: f64,
    pub scale: f64,
    /// Regularization levels actually solved.
    pub eps_levels: Vec<f64>,
    /// Max-norm gaps between successive levels.
    pub eps_gaps: Vec<f64>,
    /// The Cauchy test on successive levels passed.
    pub eps_converged: bool,
    /// `delta >= 2 + 1/(p-1)`: the result is only the smallest-level regularized solve.
    pub supercritical: bool,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Field,
    pub report: SolveReport,
}

fn field(mesh: &Arc<Mesh>, values: Vec<f64>) -> Field {
    Field::from_raw(mesh.clone(), values)
}

/// Runs `problem` down the regularization schedule.
///
/// A strictly positive warm start skips the continuation and solves at the
/// smallest level directly; problems without a singular term are solved once.
pub fn continuation(problem: &StationaryProblem, warm: Option<&Field>, cfg: &EllipticConfig) -> Result<Solution> {
    cfg.validate()?;
    let mesh = problem.mesh().clone();
    if let Some(w) = warm {
        if w.values().len() != mesh.len() || **w.mesh() != *mesh {
            return Err(Error::MeshMismatch);
        }
    }
    let mut report = SolveReport::default();
    let positive_warm = warm.filter(|w| w.min_interior() > 0.0);
    let single = problem.sing == 0.0 || positive_warm.is_some();
    let schedule: Vec<f64> = if single { vec![cfg.eps_min()] } else { cfg.eps_schedule.clone() };

    let mut u = match warm {
        Some(w) if single || w.min_interior() > 0.0 => w.values().to_vec(),
        _ => problem.with_eps(schedule[0]).ray_guess(mesh.dist()),
    };
    for (level, &eps) in schedule.iter().enumerate() {
        let prob = problem.with_eps(eps);
        let (next, stats) = prob.solve(u.clone(), cfg)?;
        report.newton_iterations += stats.iterations;
        report.residual = stats.residual;
        report.scale = stats.scale;
        report.eps_levels.push(eps);
        if level > 0 {
            let gap = next.iter().zip(&u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            report.eps_gaps.push(gap);
            let norm = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            u = next;
            if gap < cfg.newton_tol * (1.0 + norm) {
                report.eps_converged = true;
                break;
            }
        } else {
            u = next;
        }
    }
    if single {
        report.eps_converged = true;
    }
    Ok(Solution { u: field(&mesh, u), report })
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {name}={v}")))
    }
}

/// The problem `u - λ(Δ_p u + Δ_q u + ϑ(u+ε)^{-δ}) = h`.
pub fn s_lambda_problem(h: &Field, lambda: f64, eps: f64, params: &ProblemParams) -> StationaryProblem {
    StationaryProblem::new(h.mesh().clone(), params)
        .mass(1.0)
        .diffusion(lambda, lambda)
        .singular(lambda * params.theta, eps)
        .rhs(h.values().to_vec())
}

/// One regularized solve at a fixed `ε`.
pub fn solve_s_eps(h: &Field, lambda: f64, eps: f64, params: &ProblemParams, cfg: &EllipticConfig) -> Result<Field> {
    check_positive("lambda", lambda)?;
    check_positive("eps", eps)?;
    cfg.validate()?;
    let prob = s_lambda_problem(h, lambda, eps, params);
    let init = prob.ray_guess(h.mesh().dist());
    let (u, _) = prob.solve(init, cfg)?;
    Ok(field(h.mesh(), u))
}

/// `u - λ(Δ_p u + Δ_q u + ϑ u^{-δ}) = h` through the regularization schedule.
pub fn solve_s_lambda(h: &Field, lambda: f64, params: &ProblemParams, cfg: &EllipticConfig) -> Result<Solution> {
    solve_s_lambda_from(h, lambda, params, cfg, None)
}

pub fn solve_s_lambda_from(
    h: &Field,
    lambda: f64,
    params: &ProblemParams,
    cfg: &EllipticConfig,
    warm: Option<&Field>,
) -> Result<Solution> {
    check_positive("lambda", lambda)?;
    let prob = s_lambda_problem(h, lambda, cfg.eps_schedule[0], params);
    let mut sol = continuation(&prob, warm, cfg)?;
    sol.report.supercritical = !params.is_subcritical();
    Ok(sol)
}

/// `-Δ_p u - Δ_q u = ρ`.
pub fn solve_torsion(mesh: &Arc<Mesh>, rho: f64, params: &ProblemParams, cfg: &EllipticConfig) -> Result<Field> {
    check_positive("rho", rho)?;
    let prob = StationaryProblem::new(mesh.clone(), params).constant_rhs(rho);
    Ok(continuation(&prob, None, cfg)?.u)
}

/// `-Δ_p u - Δ_q u = M u^{-δ} + l u^{q-1} + L`.
pub fn solve_barrier_m(
    mesh: &Arc<Mesh>,
    m: f64,
    l: f64,
    big_l: f64,
    params: &ProblemParams,
    cfg: &EllipticConfig,
) -> Result<Solution> {
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("barrier coefficient must satisfy M>=1, got M={m}")));
    }
    if !(l >= 0.0 && big_l >= 0.0) {
        return Err(Error::Domain(format!("need l>=0 and L>=0, got l={l}, L={big_l}")));
    }
    let prob = StationaryProblem::new(mesh.clone(), params)
        .singular(m, cfg.eps_schedule[0])
        .power_source(l)
        .constant_rhs(big_l);
    let mut sol = continuation(&prob, None, cfg)?;
    sol.report.supercritical = !params.is_subcritical();
    Ok(sol)
}

/// `M^{-1/(p-1+δ)} u_M` with `u_M` the pure singular barrier.
pub fn scaled_profile(mesh: &Arc<Mesh>, m: f64, params: &ProblemParams, cfg: &EllipticConfig) -> Result<Field> {
    let sol = solve_barrier_m(mesh, m, 0.0, 0.0, params, cfg)?;
    Ok(sol.u.scaled(m.powf(-1.0 / (params.p - 1.0 + params.delta))))
}

/// Quadrature `L^1` norm of `-Δ_p w - w^{-δ}` over the interior.
pub fn limit_residual(w: &Field, params: &ProblemParams) -> Result<f64> {
    if !(w.min_interior() > 0.0) {
        return Err(Error::Domain("limit residual needs a positive profile".into()));
    }
    let prob = StationaryProblem::new(w.mesh().clone(), params).diffusion(1.0, 0.0).singular(1.0, 0.0);
    let r = prob.residual(w.values());
    let wts = w.mesh().quad_weights();
    Ok(w.mesh().interior().iter().map(|&k| wts[k] * r.values[k].abs()).sum())
}

/// Result of `u ≤ v` up to a tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub holds: bool,
    pub tol: f64,
    /// `(node, u, v)` at the first violation.
    pub first_violation: Option<(usize, f64, f64)>,
    pub max_excess: f64,
}

pub fn comparison_check(u: &Field, v: &Field) -> Result<ComparisonReport> {
    u.same_mesh(v)?;
    let tol = 1e-8 * u.linf().max(v.linf()).max(1.0);
    let mut first = None;
    let mut max_excess = f64::NEG_INFINITY;
    for (k, (&a, &b)) in u.values().iter().zip(v.values()).enumerate() {
        max_excess = max_excess.max(a - b);
        if a > b + tol && first.is_none() {
            first = Some((k, a, b));
        }
    }
    Ok(ComparisonReport { holds: first.is_none(), tol, first_violation: first, max_excess })
}

/// Fixed point of the monotone iteration with its barriers.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub u: Field,
    pub sub: Field,
    pub sup: Field,
    /// Shift `K` of the iteration.
    pub k: f64,
    /// Source strength used for the lower barrier.
    pub sub_rho: f64,
    pub iterations: usize,
    /// `‖u_n - u_{n-1}‖_∞` per sweep.
    pub increments: Vec<f64>,
}

/// Lower barrier for `-Δ_p u - Δ_q u - ϑ u^{-δ} ≥ ... ≥ -L`.
pub fn subsolution(mesh: &Arc<Mesh>, f: &Nonlinearity, params: &ProblemParams, cfg: &EllipticConfig) -> Result<(Field, f64)> {
    let big_l = f.lower_bound();
    if !big_l.is_finite() {
        return Err(Error::NotApplicable("reaction is unbounded below".into()));
    }
    let theta = params.theta;
    if theta == 0.0 {
        if big_l > 0.0 {
            return Err(Error::NotApplicable("no lower barrier without a singular term when f(0)<0".into()));
        }
        return Ok((Field::zeros(mesh.clone()), 0.0));
    }
    if params.delta < 1.0 {
        let mut rho = theta;
        for _ in 0..80 {
            let u = solve_torsion(mesh, rho, params, cfg)?;
            if rho + big_l <= theta * u.max().powf(-params.delta) {
                return Ok((u, rho));
            }
            rho *= 0.5;
        }
    } else {
        let mut rho = 0.5 * theta;
        for _ in 0..80 {
            let prob = StationaryProblem::new(mesh.clone(), params).singular(rho, cfg.eps_schedule[0]);
            let u = continuation(&prob, None, cfg)?.u;
            if (theta - rho) * u.max().powf(-params.delta) >= big_l {
                return Ok((u, rho));
            }
            rho *= 0.5;
        }
    }
    Err(Error::NotApplicable("could not construct a lower barrier".into()))
}

/// Upper barrier from `f(s) ≤ m s^{q-1} + b`.
pub fn supersolution(mesh: &Arc<Mesh>, f: &Nonlinearity, params: &ProblemParams, cfg: &EllipticConfig) -> Result<Field> {
    let (m, b) = f
        .upper_growth(params.q)
        .ok_or_else(|| Error::NotApplicable("reaction has no (q-1)-growth bound".into()))?;
    Ok(solve_barrier_m(mesh, params.theta.max(1.0), m, b, params, cfg)?.u)
}

pub const STEADY_TOL: f64 = 1e-9;
pub const STEADY_MAX: usize = 5000;

/// `-Δ_p u - Δ_q u = ϑ u^{-δ} + f(u)` by the shifted monotone iteration from the lower barrier.
pub fn solve_steady_state(
    mesh: &Arc<Mesh>,
    f: &Nonlinearity,
    params: &ProblemParams,
    cfg: &EllipticConfig,
) -> Result<SteadyState> {
    if matches!(f, Nonlinearity::Superhomog(_)) {
        return Err(Error::NotApplicable("steady states are computed for subhomogeneous reactions".into()));
    }
    let k = f.monotonicity_modulus();
    if !k.is_finite() {
        return Err(Error::NotApplicable("reaction is not one-sided Lipschitz".into()));
    }
    let (sub, sub_rho) = subsolution(mesh, f, params, cfg)?;
    let sup = supersolution(mesh, f, params, cfg)?;
    let mut u = sub.clone();
    let mut increments = Vec::new();
    for it in 1..=STEADY_MAX {
        let fx = f.eval_nodes(mesh, u.values(), 0.0);
        let rhs: Vec<f64> = fx.iter().zip(u.values()).map(|(a, b)| a + k * b).collect();
        let prob = StationaryProblem::new(mesh.clone(), params)
            .mass(k)
            .singular(params.theta, cfg.eps_schedule[0])
            .rhs(rhs);
        let next = continuation(&prob, Some(&u), cfg)?.u;
        let tol = 1e-8 * (1.0 + next.linf());
        let mut inc = 0.0f64;
        for (&a, &b) in next.values().iter().zip(u.values()) {
            if a < b - tol {
                return Err(Error::InvariantViolation(format!(
                    "monotone iteration decreased at sweep {it}: {a} < {b}"
                )));
            }
            inc = inc.max((a - b).abs());
        }
        increments.push(inc);
        u = next;
        if inc < STEADY_TOL {
            return Ok(SteadyState { u, sub, sup, k, sub_rho, iterations: it, increments });
        }
    }
    Err(Error::SolverFailed {
        reason: "monotone iteration did not settle".into(),
        iterations: STEADY_MAX,
        residual: *increments.last().unwrap_or(&f64::NAN),
        history: increments,
    })
}
