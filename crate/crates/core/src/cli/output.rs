use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::diagnostics::{SOBOLEV_GROWING, SOBOLEV_STABLE, STAB_FLOOR, STAB_JITTER, STAB_REL_TOL};
use crate::elliptic::{STEADY_MAX, STEADY_TOL};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::operators::{Field, Nonlinearity, ProblemParams};
use crate::parabolic::{energy_identity_residual, Trajectory, GROWTH_GRID, MAX_REFINE};

use super::config::RunConfig;

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Config(format!("cannot write {}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn with_header(header: Vec<String>) -> Table {
        Table { header, rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| num(x)).collect());
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.render())
    }
}

/// Node coordinates followed by one column per field.
pub fn field_table(mesh: &Mesh, columns: &[(&str, &Field)]) -> Table {
    let mut header: Vec<String> = if mesh.dim() == 1 { vec!["x".into()] } else { vec!["x".into(), "y".into()] };
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    let mut t = Table::with_header(header);
    for k in 0..mesh.len() {
        let mut row: Vec<String> = mesh.coords(k).iter().map(|&x| num(x)).collect();
        row.extend(columns.iter().map(|(_, f)| num(f.values()[k])));
        t.push(row);
    }
    t
}

/// `t, ‖u‖₂, ‖u‖_∞, J, I, M, M′, M″, energy gap` plus the step data.
pub fn trajectory_table(traj: &Trajectory, params: &ProblemParams, f: &Nonlinearity) -> Result<Table> {
    let gaps = energy_identity_residual(traj, params, f)?;
    let mut t = Table::new(&[
        "t", "l2", "linf", "J", "I", "M", "M_prime", "M_second", "energy_gap", "dt", "newton_iterations", "residual",
    ]);
    let mut m = 0.0;
    let mut mp_prev = 0.5 * traj.initial.l2_sq;
    for (n, rec) in std::iter::once(&traj.initial).chain(&traj.ledger).enumerate() {
        let mp = 0.5 * rec.l2_sq;
        let dt = if n == 0 { 0.0 } else { traj.step_sizes[n - 1] };
        m += 0.5 * dt * (mp + mp_prev);
        mp_prev = mp;
        let gap = if n == 0 { 0.0 } else { gaps[n - 1] };
        t.push(vec![
            num(rec.t),
            num(rec.l2_sq.sqrt()),
            num(rec.linf),
            num(rec.energy_j),
            num(rec.nehari_i),
            num(m),
            num(mp),
            num(-rec.nehari_i),
            num(gap),
            num(dt),
            rec.newton_iterations.to_string(),
            num(rec.residual),
        ]);
    }
    Ok(t)
}

/// Constants fixed in code, listed so that no value used by a run is implicit.
pub fn constants() -> Value {
    json!({
        "steady_state_tol": STEADY_TOL,
        "steady_state_max_sweeps": STEADY_MAX,
        "stabilization_rel_tol": STAB_REL_TOL,
        "stabilization_jitter": STAB_JITTER,
        "stabilization_floor": STAB_FLOOR,
        "sobolev_stable_change": SOBOLEV_STABLE,
        "sobolev_growing_change": SOBOLEV_GROWING,
        "picard_max_halvings": MAX_REFINE,
        "growth_check_grid": { "lo": GROWTH_GRID.0, "hi": GROWTH_GRID.1, "points": GROWTH_GRID.2 },
        "shell_fit_band": "d < diameter/10",
        "csv_digits": 17,
    })
}

/// Quantities derived from the configuration before any solve.
pub fn derived(cfg: &RunConfig, mesh: &Mesh, params: &ProblemParams) -> Value {
    let mut v = json!({
        "nodes": mesh.len(),
        "h_min": mesh.h_min(),
        "h_max": mesh.h_max(),
        "measure": mesh.measure(),
        "diameter": mesh.diameter(),
        "grad_regularization_eta": mesh.grad_regularization(),
        "profile_constant_a": mesh.profile_constant(),
        "delta_crit": params.delta_crit(),
        "subcritical": params.is_subcritical(),
        "tau": params.tau(),
        "m_crit": params.m_crit(),
        "eps_min": cfg.solver.eps_min(),
    });
    if cfg.experiment.is_time_dependent() {
        v["dt"] = json!(cfg.time.t_end / cfg.time.steps as f64);
    }
    v
}

pub fn render_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    let _ = writeln!(s);
    s
}
