//! Measurements on fields and trajectories: boundary profiles, blow-up
//! ledgers and verdicts, stabilization and gradient integrability.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::elliptic::{solve_barrier_m, EllipticConfig};
use crate::error::{Error, Result};
use crate::mesh::{phi_delta, Mesh};
use crate::operators::{energy_j, grad_integral, nehari_i, Field, Nonlinearity, ProblemParams};
use crate::parabolic::{RunStatus, Trajectory};

/// Two-sided cone constants and the log-log boundary slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShellFit {
    pub c1: f64,
    pub c2: f64,
    pub fitted_exponent: f64,
    pub fit_nodes: usize,
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn conical_shell_fit(u: &Field, params: &ProblemParams) -> Result<ShellFit> {
    let mesh = u.mesh();
    let a = mesh.profile_constant();
    let mut c1 = f64::INFINITY;
    let mut c2 = 0.0f64;
    for &k in mesh.interior() {
        let phi = phi_delta(mesh.dist()[k], params.delta, params.p, a)?;
        let r = u.values()[k] / phi;
        c1 = c1.min(r);
        c2 = c2.max(r);
    }
    let cut = mesh.diameter() / 10.0;
    let (mut lx, mut ly) = (vec![], vec![]);
    for &k in mesh.interior() {
        let d = mesh.dist()[k];
        let v = u.values()[k];
        if d < cut && v > 0.0 {
            lx.push(d.ln());
            ly.push(v.ln());
        }
    }
    let distinct = lx.iter().any(|&x| (x - lx[0]).abs() > 1e-12);
    if lx.len() < 2 || !distinct {
        return Err(Error::InvalidMesh(format!(
            "only {} positive nodes closer than {cut} to the boundary; refine the mesh",
            lx.len()
        )));
    }
    Ok(ShellFit { c1, c2, fitted_exponent: ls_slope(&lx, &ly), fit_nodes: lx.len() })
}

/// Concavity quantities along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupLedger {
    pub times: Vec<f64>,
    /// `½∫_0^t ‖u‖²`, trapezoid in time.
    pub m: Vec<f64>,
    /// `½‖u(t)‖²`.
    pub mp: Vec<f64>,
    /// `-I(u(t))`.
    pub mpp: Vec<f64>,
    pub j: Vec<f64>,
    /// `|J(t_n) - J(0) + Σ Δt‖(u^k - u^{k-1})/Δt‖²|`.
    pub energy_audit: Vec<f64>,
    pub concavity_sigma: Option<f64>,
    pub blown_up: bool,
    pub escape_time: Option<f64>,
}

pub fn build_blowup_ledger(traj: &Trajectory, params: &ProblemParams, f: &Nonlinearity) -> Result<BlowupLedger> {
    if traj.steps() < 2 {
        return Err(Error::Domain("blow-up ledger needs at least two steps".into()));
    }
    let n = traj.fields.len();
    let mut mp = Vec::with_capacity(n);
    let mut mpp = Vec::with_capacity(n);
    let mut j = Vec::with_capacity(n);
    for (k, u) in traj.fields.iter().enumerate() {
        mp.push(0.5 * u.l2_sq());
        let t = traj.times[k];
        mpp.push(-crate::operators::nehari_i_at(u, params, f, t)?);
        j.push(crate::operators::energy_j_at(u, params, f, t)?);
    }
    let mut m = vec![0.0; n];
    let mut audit = vec![0.0; n];
    let mut dissip = 0.0;
    for k in 1..n {
        let dt = traj.step_sizes[k - 1];
        m[k] = m[k - 1] + 0.5 * dt * (mp[k] + mp[k - 1]);
        let v = traj.fields[k].sub(&traj.fields[k - 1])?;
        dissip += v.l2_sq() / dt;
        audit[k] = (j[k] - j[0] + dissip).abs();
    }
    let (blown_up, escape_time) = match traj.status {
        RunStatus::BlownUp { .. } => (true, Some(traj.final_time())),
        _ => (false, None),
    };
    Ok(BlowupLedger {
        times: traj.times.clone(),
        m,
        mp,
        mpp,
        j,
        energy_audit: audit,
        concavity_sigma: (params.p > 2.0).then(|| default_sigma(params.p)),
        blown_up,
        escape_time,
    })
}

/// Midpoint of `(1, p/2)`.
pub fn default_sigma(p: f64) -> f64 {
    0.5 * (1.0 + 0.5 * p)
}

fn power_data(f: &Nonlinearity) -> Result<(f64, f64)> {
    f.power_growth()
        .ok_or_else(|| Error::NotApplicable("blow-up analysis needs a power-type reaction".into()))
}

/// Upper threshold on `ϑ` in the small-singularity case.
pub fn theta_star(u0: &Field, params: &ProblemParams, f: &Nonlinearity, c_star: f64, lambda_star: f64) -> Result<f64> {
    let (r, _) = power_data(f)?;
    if !(c_star > 0.0 && lambda_star > 0.0) {
        return Err(Error::Config("C_star and lambda_star must be positive".into()));
    }
    let (p, q, d) = (params.p, params.q, params.delta);
    let norm = u0.l2();
    let second = if d < 1.0 {
        let e = q - 1.0 + d;
        r * (p - q) * (1.0 - d) * 2f64.powf(-e / 2.0) / (p * q * (r - 1.0 + d) * c_star.powf(e)) * norm.powf(e)
    } else if d == 1.0 {
        let e = q - 1.0;
        (p - q) / (p * q) * 2f64.powf(-e / 2.0) * norm.powf(e) / c_star.powf(e)
    } else {
        return Err(Error::NotApplicable(format!("threshold defined for delta<=1, got delta={d}")));
    };
    Ok(lambda_star.min(second))
}

/// User-supplied constants of the small-singularity case.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupInputs {
    /// Lower bound for the Nehari infimum.
    pub theta_hat: Option<f64>,
    pub c_star: Option<f64>,
    pub lambda_star: Option<f64>,
    /// Concavity exponent, in `(1, p/2)`; defaults to the midpoint.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupCase {
    CaseIDeltaLe1,
    CaseIiDeltaGt1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcavityRoute {
    Sigma,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Premises {
    pub j0: f64,
    pub i0: f64,
    pub energy_ok: bool,
    pub nehari_negative: Option<bool>,
    pub theta_below: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observed {
    pub blown_up: bool,
    pub escape_time: Option<f64>,
    pub route: ConcavityRoute,
    pub concavity_holds_on_tail: bool,
    /// Extrapolated blow-up time from the first tail point.
    pub t_star: Option<f64>,
    pub mpp_positive_after_first: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupVerdict {
    pub condition_checked: BlowupCase,
    pub theta_star: Option<f64>,
    pub premises: Premises,
    pub premises_hold: bool,
    pub observed: Option<Observed>,
}

/// Premises of the finite-time blow-up statement and, given a ledger, what the run showed.
pub fn check_blowup_conditions(
    u0: &Field,
    params: &ProblemParams,
    f: &Nonlinearity,
    inputs: &BlowupInputs,
    ledger: Option<&BlowupLedger>,
) -> Result<BlowupVerdict> {
    let (r, c_r) = power_data(f)?;
    if !(r >= params.p && r > 2.0) {
        return Err(Error::NotApplicable(format!("need r >= p and r > 2, got r={r}, p={}", params.p)));
    }
    params.require_subcritical()?;
    let j0 = energy_j(u0, params, f)?;
    let i0 = nehari_i(u0, params, f)?;
    let (case, theta_star_v, premises) = if params.delta > 1.0 {
        let p = Premises { j0, i0, energy_ok: j0 <= 0.0, nehari_negative: None, theta_below: None };
        (BlowupCase::CaseIiDeltaGt1, None, p)
    } else {
        let missing = |k: &str| Error::Config(format!("blow-up case delta<=1 needs `{k}` in [diagnostics]"));
        let theta_hat = inputs.theta_hat.ok_or_else(|| missing("theta_hat"))?;
        let c_star = inputs.c_star.ok_or_else(|| missing("c_star"))?;
        let lambda_star = inputs.lambda_star.ok_or_else(|| missing("lambda_star"))?;
        let bound = if params.delta == 1.0 { theta_hat.min(0.0) } else { theta_hat };
        let ts = theta_star(u0, params, f, c_star, lambda_star)?;
        let p = Premises {
            j0,
            i0,
            energy_ok: j0 <= bound,
            nehari_negative: Some(i0 < 0.0),
            theta_below: Some(params.theta < ts),
        };
        (BlowupCase::CaseIDeltaLe1, Some(ts), p)
    };
    let premises_hold =
        premises.energy_ok && premises.nehari_negative.unwrap_or(true) && premises.theta_below.unwrap_or(true);

    let observed = match ledger {
        None => None,
        Some(l) => Some(observe(l, params, r, c_r, u0.mesh(), inputs.sigma)?),
    };
    Ok(BlowupVerdict { condition_checked: case, theta_star: theta_star_v, premises, premises_hold, observed })
}

/// `C_r` of the differential inequality `C_r M'^{r/2} ≤ M''`.
pub fn power_route_constant(r: f64, c_r: f64, p: f64, measure: f64) -> f64 {
    c_r * (r - p) / r * 2f64.powf(r / 2.0) * measure.powf((2.0 - r) / 2.0)
}

fn observe(
    l: &BlowupLedger,
    params: &ProblemParams,
    r: f64,
    c_r: f64,
    mesh: &Arc<Mesh>,
    sigma: Option<f64>,
) -> Result<Observed> {
    let n = l.times.len();
    let tail = (n / 2).max(1)..n;
    let t2 = tail.start;
    let rel = |a: f64, b: f64| a <= b * (1.0 + 1e-12) + 1e-300;
    let mpp_positive_after_first = l.mpp[1..].iter().skip(1).all(|&v| v > 0.0);
    let (route, holds, t_star) = if params.p > 2.0 {
        let s = sigma.unwrap_or_else(|| default_sigma(params.p));
        if !(s > 1.0 && s < params.p / 2.0) {
            return Err(Error::Config(format!("sigma must lie in (1, p/2), got {s}")));
        }
        let holds = tail.clone().all(|k| rel(s * l.mp[k] * l.mp[k], l.mpp[k] * l.m[k]));
        let ts = (l.mp[t2] > 0.0).then(|| l.times[t2] + l.m[t2] / ((s - 1.0) * l.mp[t2]));
        (ConcavityRoute::Sigma, holds, ts)
    } else {
        let c = power_route_constant(r, c_r, params.p, mesh.measure());
        let holds = tail.clone().all(|k| rel(c * l.mp[k].powf(r / 2.0), l.mpp[k]));
        let ts = (l.mp[t2] > 0.0).then(|| l.times[t2] + 2.0 * l.mp[t2].powf(1.0 - r / 2.0) / (c * (r - 2.0)));
        (ConcavityRoute::Power, holds, ts)
    };
    Ok(Observed {
        blown_up: l.blown_up,
        escape_time: l.escape_time,
        route,
        concavity_holds_on_tail: holds,
        t_star,
        mpp_positive_after_first,
    })
}

/// Distance to a steady state along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationReport {
    pub errors: Vec<f64>,
    pub final_error: f64,
    pub tol: f64,
    pub tail_nonincreasing: bool,
    pub converged: bool,
}

pub const STAB_REL_TOL: f64 = 1e-3;
pub const STAB_JITTER: f64 = 0.05;
/// Absolute slack of the tail test, relative to `‖u_∞‖_∞`.
pub const STAB_FLOOR: f64 = 1e-8;

pub fn stabilization_report(traj: &Trajectory, u_inf: &Field) -> Result<StabilizationReport> {
    let errors: Vec<f64> = traj.fields.iter().map(|u| u.max_abs_diff(u_inf)).collect::<Result<_>>()?;
    let scale = u_inf.linf();
    let tol = STAB_REL_TOL * scale;
    let floor = STAB_FLOOR * scale.max(f64::MIN_POSITIVE);
    let n = errors.len();
    let tail = &errors[n / 2..];
    let tail_nonincreasing = tail.windows(2).all(|w| w[1] <= (1.0 + STAB_JITTER) * w[0] + floor);
    let final_error = *errors.last().unwrap();
    Ok(StabilizationReport {
        converged: final_error < tol && tail_nonincreasing,
        errors,
        final_error,
        tol,
        tail_nonincreasing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Stable,
    Growing,
    Indeterminate,
}

pub const SOBOLEV_STABLE: f64 = 0.10;
pub const SOBOLEV_GROWING: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolevRow {
    pub m: f64,
    pub nodes: Vec<usize>,
    pub integrals: Vec<f64>,
    /// `(I_{k+1} - I_k)/I_k` per refinement.
    pub changes: Vec<f64>,
    pub trend: Trend,
}

pub fn classify(changes: &[f64]) -> Trend {
    if changes.iter().all(|c| c.abs() < SOBOLEV_STABLE) {
        Trend::Stable
    } else if changes.iter().all(|&c| c > SOBOLEV_GROWING) {
        Trend::Growing
    } else {
        Trend::Indeterminate
    }
}

/// `∫|∇u|^m` over a refinement family and the trend per exponent.
pub fn sobolev_probe(family: &[Field], m_grid: &[f64]) -> Result<Vec<SobolevRow>> {
    if family.len() < 2 {
        return Err(Error::Domain("need at least two refinement levels".into()));
    }
    m_grid
        .iter()
        .map(|&m| {
            let integrals: Vec<f64> = family.iter().map(|u| grad_integral(u, m)).collect::<Result<_>>()?;
            let changes: Vec<f64> = integrals.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
            Ok(SobolevRow {
                m,
                nodes: family.iter().map(|u| u.mesh().len()).collect(),
                trend: classify(&changes),
                integrals,
                changes,
            })
        })
        .collect()
}

/// Pure singular solutions `-Δ_p u - Δ_q u = ϑ u^{-δ}` on the given meshes.
pub fn singular_family(meshes: &[Arc<Mesh>], params: &ProblemParams, cfg: &EllipticConfig) -> Result<Vec<Field>> {
    if !(params.delta > 1.0) {
        return Err(Error::NotApplicable("the integrability probe concerns delta>1".into()));
    }
    meshes
        .iter()
        .map(|m| Ok(solve_barrier_m(m, params.theta.max(1.0), 0.0, 0.0, params, cfg)?.u))
        .collect()
}
