//! Convergence tables over successive time or space refinements.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::elliptic::{continuation, solve_steady_state, StationaryProblem};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::operators::{Field, Forcing, Nonlinearity};
use crate::parabolic::{run_g, run_p, RunStatus, Trajectory};

use super::config::{Experiment, InitialSpec, NonlinearitySpec, RunConfig};
use super::output::{ensure_dir, num, render_json, write_text, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Halve the time step, keep the mesh.
    Time,
    /// Halve the mesh width; parabolic runs also quarter the time step.
    Space,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// Against `a e^{-2λt} Π sin`, the exact solution when `p = q = 2`.
    Exact,
    /// Between successive levels.
    SelfConvergence,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineLevel {
    pub level: usize,
    pub nodes: usize,
    pub steps: Option<usize>,
    pub h: f64,
    pub dt: Option<f64>,
    pub error: Option<f64>,
    pub order: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineReport {
    pub axis: Axis,
    pub mode: ErrorMode,
    pub levels: Vec<RefineLevel>,
    pub orders: Vec<f64>,
    /// Gaps between regularization levels on the finest mesh (stationary runs).
    pub eps_gaps: Option<Vec<f64>>,
    pub eps_gaps_decreasing: Option<bool>,
}

/// The configuration is the heat equation started from one sine mode.
fn exact_heat_amplitude(cfg: &RunConfig) -> Option<f64> {
    let pr = &cfg.problem;
    let heat = pr.p == 2.0 && pr.q == 2.0 && pr.theta == 0.0 && cfg.nonlinearity == NonlinearitySpec::None;
    match cfg.initial {
        InitialSpec::Sine { amplitude, noise } if heat && noise == 0.0 => Some(amplitude),
        _ => None,
    }
}

/// `a e^{-2λt} Π sin(π (x_i - lo_i)/L_i)` with `λ = Σ (π/L_i)²`; solves
/// `u_t = 2Δu`, the flow with both exponents equal to 2 and no singular term.
pub fn heat_mode(mesh: &Arc<Mesh>, amplitude: f64, t: f64) -> Field {
    let lo = mesh.nodes()[0];
    let hi = mesh.nodes()[mesh.len() - 1];
    let dim = mesh.dim();
    let lambda: f64 = (0..dim).map(|i| (PI / (hi[i] - lo[i])).powi(2)).sum();
    let decay = amplitude * (-2.0 * lambda * t).exp();
    Field::from_fn_dirichlet(mesh.clone(), |x| {
        decay * (0..dim).map(|i| (PI * (x[i] - lo[i]) / (hi[i] - lo[i])).sin()).product::<f64>()
    })
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn march(cfg: &RunConfig, mesh: &Arc<Mesh>, steps: usize) -> Result<Trajectory> {
    let params = cfg.params()?;
    let pc = cfg.parabolic_config();
    let u0 = cfg.initial_field(mesh)?;
    let t = cfg.time.t_end;
    let traj = match cfg.nonlinearity.build() {
        Nonlinearity::None => run_g(&u0, &Forcing::Const(0.0), t, steps, &params, &pc)?,
        Nonlinearity::Frozen(g) => run_g(&u0, &g, t, steps, &params, &pc)?,
        f => run_p(&u0, &f, t, steps, &params, &pc)?,
    };
    if let RunStatus::SolverFailed { step, reason } = &traj.status {
        return Err(Error::SolverFailed {
            reason: format!("refinement run, step {step}: {reason}"),
            iterations: 0,
            residual: f64::NAN,
            history: vec![],
        });
    }
    Ok(traj)
}

/// Max over the coarse time grid and coarse nodes of `|coarse - fine|`.
fn trajectory_gap(coarse: &Trajectory, fine: &Trajectory, stride: usize, nodes: &[usize]) -> f64 {
    let mut gap = 0.0f64;
    for (n, u) in coarse.fields.iter().enumerate() {
        let v = &fine.fields[n * stride];
        for (k, &kf) in nodes.iter().enumerate() {
            gap = gap.max((u.values()[k] - v.values()[kf]).abs());
        }
    }
    gap
}

pub fn refinement_study(cfg: &RunConfig, levels: usize, axis: Axis) -> Result<RefineReport> {
    if levels < 2 {
        return Err(Error::Config(format!("--levels: need at least 2, got {levels}")));
    }
    cfg.validate()?;
    let report = match cfg.experiment {
        Experiment::ParabolicSub => parabolic_study(cfg, levels, axis)?,
        Experiment::Stationary => {
            if axis == Axis::Time {
                return Err(Error::Config("--axis: stationary runs refine in space only".into()));
            }
            stationary_study(cfg, levels)?
        }
        other => {
            return Err(Error::Config(format!(
                "experiment: refinement studies cover stationary and parabolic_sub, not {}",
                other.name()
            )))
        }
    };
    let dir = PathBuf::from(&cfg.output.dir);
    ensure_dir(&dir)?;
    let mut t = Table::new(&["level", "nodes", "steps", "h", "dt", "error", "order"]);
    for l in &report.levels {
        t.push(vec![
            l.level.to_string(),
            l.nodes.to_string(),
            l.steps.map(|s| s.to_string()).unwrap_or_default(),
            num(l.h),
            l.dt.map(num).unwrap_or_default(),
            l.error.map(num).unwrap_or_default(),
            l.order.map(num).unwrap_or_default(),
        ]);
    }
    t.write(&dir.join("refine.csv"))?;
    let meta: Value = json!({
        "tool": { "name": "pqflow", "version": env!("CARGO_PKG_VERSION") },
        "config": serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?,
        "levels": levels,
        "report": report,
    });
    write_text(&dir.join("refine_meta.json"), &render_json(&meta))?;
    Ok(report)
}

fn parabolic_study(cfg: &RunConfig, levels: usize, axis: Axis) -> Result<RefineReport> {
    let (space, time) = match axis {
        Axis::Time => (1usize, 2usize),
        Axis::Space => (2, 4),
    };
    let mut meshes = vec![];
    let mut trajs = vec![];
    let mut steps = vec![];
    for k in 0..levels {
        let mesh = Arc::new(cfg.mesh.refined(space.pow(k as u32)).build()?);
        let n = cfg.time.steps * time.pow(k as u32);
        trajs.push(march(cfg, &mesh, n)?);
        meshes.push(mesh);
        steps.push(n);
    }
    let exact = exact_heat_amplitude(cfg);
    let errors: Vec<f64> = match exact {
        Some(a) => trajs
            .iter()
            .zip(&meshes)
            .map(|(tr, m)| {
                tr.fields
                    .iter()
                    .zip(&tr.times)
                    .map(|(u, &t)| u.max_abs_diff(&heat_mode(m, a, t)))
                    .try_fold(0.0f64, |acc, e| e.map(|e| acc.max(e)))
            })
            .collect::<Result<_>>()?,
        None => (0..levels - 1)
            .map(|k| {
                let nodes: Vec<usize> = meshes[k + 1].injection_from(&meshes[k])?;
                Ok(trajectory_gap(&trajs[k], &trajs[k + 1], time, &nodes))
            })
            .collect::<Result<_>>()?,
    };
    let ord = orders(&errors);
    let rows = (0..levels)
        .map(|k| RefineLevel {
            level: k,
            nodes: meshes[k].len(),
            steps: Some(steps[k]),
            h: meshes[k].h_max(),
            dt: Some(cfg.time.t_end / steps[k] as f64),
            error: errors.get(k).copied(),
            order: k.checked_sub(1).and_then(|j| ord.get(j).copied()),
        })
        .collect();
    Ok(RefineReport {
        axis,
        mode: if exact.is_some() { ErrorMode::Exact } else { ErrorMode::SelfConvergence },
        levels: rows,
        orders: ord,
        eps_gaps: None,
        eps_gaps_decreasing: None,
    })
}

fn stationary_study(cfg: &RunConfig, levels: usize) -> Result<RefineReport> {
    let params = cfg.params()?;
    let f = cfg.nonlinearity.build();
    let mut meshes = vec![];
    let mut sols = vec![];
    for k in 0..levels {
        let mesh = Arc::new(cfg.mesh.refined(1 << k).build()?);
        sols.push(solve_steady_state(&mesh, &f, &params, &cfg.solver)?.u);
        meshes.push(mesh);
    }
    let errors: Vec<f64> = (0..levels - 1)
        .map(|k| {
            let nodes = meshes[k + 1].injection_from(&meshes[k])?;
            Ok(nodes
                .iter()
                .enumerate()
                .map(|(i, &j)| (sols[k].values()[i] - sols[k + 1].values()[j]).abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let ord = orders(&errors);
    // Cold continuation on the finest mesh for the regularization gaps.
    let fine = meshes.last().unwrap();
    let u = sols.last().unwrap();
    let prob = StationaryProblem::new(fine.clone(), &params)
        .singular(params.theta, cfg.solver.eps_schedule[0])
        .rhs(f.eval_nodes(fine, u.values(), 0.0));
    let gaps = continuation(&prob, None, &cfg.solver)?.report.eps_gaps;
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let rows = (0..levels)
        .map(|k| RefineLevel {
            level: k,
            nodes: meshes[k].len(),
            steps: None,
            h: meshes[k].h_max(),
            dt: None,
            error: errors.get(k).copied(),
            order: k.checked_sub(1).and_then(|j| ord.get(j).copied()),
        })
        .collect();
    Ok(RefineReport {
        axis: Axis::Space,
        mode: ErrorMode::SelfConvergence,
        levels: rows,
        orders: ord,
        eps_gaps: Some(gaps),
        eps_gaps_decreasing: Some(decreasing),
    })
}
