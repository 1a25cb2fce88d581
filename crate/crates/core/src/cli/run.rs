//! One experiment, start to finish: solve, write artifacts, return the summary.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::diagnostics::{
    build_blowup_ledger, check_blowup_conditions, conical_shell_fit, singular_family, sobolev_probe,
    stabilization_report, BlowupVerdict,
};
use crate::elliptic::{
    comparison_check, continuation, limit_residual, scaled_profile, solve_steady_state, solve_torsion,
    StationaryProblem,
};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::operators::{energy_j, nehari_i, Field, Forcing, Nonlinearity, ProblemParams};
use crate::parabolic::{run_g, run_p, run_superhomog, RunStatus, Trajectory};

use super::config::{Experiment, InitialSpec, NonlinearitySpec, RunConfig};
use super::output::{constants, derived, ensure_dir, field_table, num, render_json, trajectory_table, write_text, Table};

/// What a finished run reports back; failures after the artifacts are written
/// come back as `Err` with the matching exit code.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub meta: Value,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    dir: &'a Path,
    mesh: Arc<Mesh>,
    params: ProblemParams,
    f: Nonlinearity,
    artifacts: Vec<String>,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, t: &Table) -> Result<()> {
        t.write(&self.dir.join(name))?;
        self.artifacts.push(name.into());
        Ok(())
    }
}

/// Outcome of an experiment body: results for the summary and, possibly, a
/// failure to surface once everything is on disk.
struct Body {
    results: Value,
    failure: Option<Error>,
}

impl Body {
    fn ok(results: Value) -> Body {
        Body { results, failure: None }
    }
}

pub fn run_experiment(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let dir = PathBuf::from(&cfg.output.dir);
    ensure_dir(&dir)?;
    let mesh = cfg.mesh()?;
    let params = cfg.params()?;
    let mut ctx = Ctx { cfg, dir: &dir, mesh: mesh.clone(), params, f: cfg.nonlinearity.build(), artifacts: vec![] };
    let body = match cfg.experiment {
        Experiment::Stationary => stationary(&mut ctx),
        Experiment::ParabolicSub => parabolic_sub(&mut ctx),
        Experiment::ParabolicSuper => parabolic_super(&mut ctx),
        Experiment::BlowupScan => blowup_scan(&mut ctx),
        Experiment::SobolevProbe => sobolev(&mut ctx),
        Experiment::ScalingProbe => scaling(&mut ctx),
        Experiment::TorsionLimit => torsion(&mut ctx),
    };
    let (results, failure, status) = match body {
        Ok(b) => {
            let status = match &b.failure {
                None => json!({ "kind": "ok", "exit_code": 0 }),
                Some(e) => json!({ "kind": failure_kind(e), "exit_code": e.exit_code(), "message": e.to_string() }),
            };
            (b.results, b.failure, status)
        }
        Err(e) => {
            let status = json!({ "kind": failure_kind(&e), "exit_code": e.exit_code(), "message": e.to_string() });
            (Value::Null, Some(e), status)
        }
    };
    ctx.artifacts.push("run_meta.json".into());
    let meta = json!({
        "tool": { "name": "pqflow", "version": env!("CARGO_PKG_VERSION") },
        "experiment": cfg.experiment.name(),
        "config": serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?,
        "derived": derived(cfg, &mesh, &params),
        "constants": constants(),
        "results": results,
        "status": status,
        "artifacts": ctx.artifacts,
    });
    write_text(&dir.join("run_meta.json"), &render_json(&meta))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(RunReport { dir, meta }),
    }
}

fn failure_kind(e: &Error) -> &'static str {
    match e.exit_code() {
        2 => "config_error",
        4 => "invariant_violation",
        _ => "solver_failure",
    }
}

fn status_failure(status: &RunStatus) -> Option<Error> {
    match status {
        RunStatus::SolverFailed { step, reason } => Some(Error::SolverFailed {
            reason: format!("step {step}: {reason}"),
            iterations: 0,
            residual: f64::NAN,
            history: vec![],
        }),
        _ => None,
    }
}

fn status_value(status: &RunStatus) -> Value {
    serde_json::to_value(status).unwrap_or(Value::Null)
}

fn stationary(ctx: &mut Ctx) -> Result<Body> {
    let cfg = ctx.cfg;
    let (mesh, params) = (ctx.mesh.clone(), ctx.params);
    let ss = solve_steady_state(&mesh, &ctx.f, &params, &cfg.solver)?;
    // Cold continuation of the fixed-point problem, for the gaps between levels.
    let fx = ctx.f.eval_nodes(&mesh, ss.u.values(), 0.0);
    let prob = StationaryProblem::new(mesh.clone(), &params).singular(params.theta, cfg.solver.eps_schedule[0]).rhs(fx);
    let cold = continuation(&prob, None, &cfg.solver)?;
    let lower = comparison_check(&ss.sub, &ss.u)?;
    let upper = comparison_check(&ss.u, &ss.sup)?;
    let shell = conical_shell_fit(&ss.u, &params);
    ctx.write("field.csv", &field_table(&mesh, &[("u", &ss.u), ("sub", &ss.sub), ("sup", &ss.sup)]))?;
    let mut inc = Table::new(&["sweep", "increment"]);
    for (k, d) in ss.increments.iter().enumerate() {
        inc.push(vec![(k + 1).to_string(), num(*d)]);
    }
    ctx.write("increments.csv", &inc)?;
    let failure = if !(lower.holds && upper.holds) {
        Some(Error::InvariantViolation("steady state leaves its barriers".into()))
    } else if params.theta > 0.0 && !ss.u.is_positive_interior() {
        Some(Error::InvariantViolation("steady state is not positive inside".into()))
    } else {
        None
    };
    Ok(Body {
        results: json!({
            "linf": ss.u.linf(),
            "energy_j": energy_j(&ss.u, &params, &ctx.f)?,
            "monotone_shift_k": ss.k,
            "sub_rho": ss.sub_rho,
            "iterations": ss.iterations,
            "final_increment": ss.increments.last(),
            "continuation": cold.report,
            "gap_to_cold_solve": ss.u.max_abs_diff(&cold.u)?,
            "sub_below_u": lower,
            "u_below_sup": upper,
            "shell_fit": match shell { Ok(s) => json!(s), Err(e) => json!({ "unavailable": e.to_string() }) },
        }),
        failure,
    })
}

fn march_sub(ctx: &Ctx, u0: &Field) -> Result<Trajectory> {
    let cfg = ctx.cfg;
    let pc = cfg.parabolic_config();
    let (t, n) = (cfg.time.t_end, cfg.time.steps);
    match &ctx.f {
        Nonlinearity::None => run_g(u0, &Forcing::Const(0.0), t, n, &ctx.params, &pc),
        Nonlinearity::Frozen(g) => run_g(u0, g, t, n, &ctx.params, &pc),
        f => run_p(u0, f, t, n, &ctx.params, &pc),
    }
}

fn parabolic_sub(ctx: &mut Ctx) -> Result<Body> {
    let cfg = ctx.cfg;
    let (mesh, params) = (ctx.mesh.clone(), ctx.params);
    let u0 = cfg.initial_field(&mesh)?;
    let traj = march_sub(ctx, &u0)?;
    ctx.write("trajectory.csv", &trajectory_table(&traj, &params, &ctx.f)?)?;
    let autonomous = !matches!(cfg.nonlinearity, NonlinearitySpec::TimeSine { .. });
    let steady = if autonomous { Some(solve_steady_state(&mesh, &ctx.f, &params, &cfg.solver)?) } else { None };
    let mut cols: Vec<(&str, &Field)> = vec![("u0", &u0), ("u_final", traj.last())];
    if let Some(ss) = &steady {
        cols.push(("u_steady", &ss.u));
    }
    ctx.write("field.csv", &field_table(&mesh, &cols))?;

    let mut failure = status_failure(&traj.status);
    if failure.is_none() {
        if let RunStatus::BlownUp { step } = traj.status {
            failure = Some(Error::InvariantViolation(format!("subhomogeneous run exceeded the blow-up cap at step {step}")));
        }
    }
    if failure.is_none() && params.theta > 0.0 {
        if let Some(n) = traj.fields.iter().skip(1).position(|u| !u.is_positive_interior()) {
            failure = Some(Error::InvariantViolation(format!("positivity lost at step {}", n + 1)));
        }
    }
    let mut band = Value::Null;
    if let (Some(ss), InitialSpec::Subsolution | InitialSpec::SteadyState) = (&steady, cfg.initial) {
        let mut worst = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut first_break = None;
        for (n, u) in traj.fields.iter().enumerate() {
            let lo = comparison_check(&ss.sub, u)?;
            let hi = comparison_check(u, &ss.sup)?;
            worst = (worst.0.max(lo.max_excess), worst.1.max(hi.max_excess));
            if first_break.is_none() && !(lo.holds && hi.holds) {
                first_break = Some(n);
            }
        }
        if failure.is_none() {
            if let Some(n) = first_break {
                failure = Some(Error::InvariantViolation(format!("barrier order broken at step {n}")));
            }
        }
        band = json!({ "holds": first_break.is_none(), "max_sub_excess": worst.0, "max_sup_excess": worst.1 });
    }
    let stab = match &steady {
        Some(ss) => json!(stabilization_report(&traj, &ss.u)?),
        None => Value::Null,
    };
    Ok(Body {
        results: json!({
            "run_status": status_value(&traj.status),
            "steps": traj.steps(),
            "final_time": traj.final_time(),
            "final_linf": traj.last().linf(),
            "newton_iterations_total": traj.ledger.iter().map(|r| r.newton_iterations).sum::<usize>(),
            "max_step_residual": traj.ledger.iter().map(|r| r.residual).fold(0.0, f64::max),
            "warnings": traj.warnings,
            "steady_state": steady.as_ref().map(|ss| json!({ "linf": ss.u.linf(), "iterations": ss.iterations })),
            "stabilization": stab,
            "barrier_band": band,
        }),
        failure,
    })
}

struct SuperRun {
    traj: Trajectory,
    verdict: Option<BlowupVerdict>,
    ledger_note: Option<String>,
}

fn super_run(ctx: &Ctx, u0: &Field) -> Result<SuperRun> {
    let cfg = ctx.cfg;
    let inputs = cfg.diagnostics.blowup_inputs();
    // Premises first: missing constants are a configuration error, not a late surprise.
    let premises = match check_blowup_conditions(u0, &ctx.params, &ctx.f, &inputs, None) {
        Ok(_) => true,
        Err(e @ Error::Config(_)) => return Err(e),
        Err(_) => false,
    };
    let traj = run_superhomog(u0, &ctx.f, cfg.time.t_end, cfg.time.steps, &ctx.params, &cfg.parabolic_config())?;
    let (verdict, ledger_note) = match build_blowup_ledger(&traj, &ctx.params, &ctx.f) {
        Ok(l) if premises => (Some(check_blowup_conditions(u0, &ctx.params, &ctx.f, &inputs, Some(&l))?), None),
        Ok(_) => (None, Some("blow-up statement not applicable to these exponents".to_string())),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SuperRun { traj, verdict, ledger_note })
}

fn window_table(traj: &Trajectory) -> Table {
    let mut t = Table::new(&[
        "t_start", "t_end", "steps", "refinement", "lipschitz", "contraction_estimate", "sweeps", "last_sweep_distance",
        "converged",
    ]);
    for w in &traj.windows {
        t.push(vec![
            num(w.t_start),
            num(w.t_end),
            w.steps.to_string(),
            w.refinement.to_string(),
            num(w.lipschitz),
            num(w.contraction_estimate),
            w.sweep_distances.len().to_string(),
            w.sweep_distances.last().map(|&d| num(d)).unwrap_or_default(),
            w.converged.to_string(),
        ]);
    }
    t
}

fn escape_step(status: &RunStatus) -> Option<usize> {
    match status {
        RunStatus::BlownUp { step } => Some(*step),
        _ => None,
    }
}

fn super_summary(u0: &Field, run: &SuperRun, params: &ProblemParams, f: &Nonlinearity) -> Result<Value> {
    let traj = &run.traj;
    Ok(json!({
        "run_status": status_value(&traj.status),
        "escape_step": escape_step(&traj.status),
        "escape_time": escape_step(&traj.status).map(|_| traj.final_time()),
        "blow_cap": traj.blow_cap,
        "recorded_steps": traj.steps(),
        "final_linf": traj.last().linf(),
        "windows": traj.windows.len(),
        "max_refinement": traj.windows.iter().map(|w| w.refinement).max(),
        "j0": energy_j(u0, params, f)?,
        "i0": nehari_i(u0, params, f)?,
        "verdict": run.verdict,
        "verdict_note": run.ledger_note,
        "warnings": traj.warnings,
    }))
}

fn parabolic_super(ctx: &mut Ctx) -> Result<Body> {
    let u0 = ctx.cfg.initial_field(&ctx.mesh)?;
    let run = super_run(ctx, &u0)?;
    let (params, f) = (ctx.params, ctx.f.clone());
    ctx.write("trajectory.csv", &trajectory_table(&run.traj, &params, &f)?)?;
    ctx.write("windows.csv", &window_table(&run.traj))?;
    let mesh = ctx.mesh.clone();
    ctx.write("field.csv", &field_table(&mesh, &[("u0", &u0), ("u_final", run.traj.last())]))?;
    Ok(Body { results: super_summary(&u0, &run, &params, &f)?, failure: status_failure(&run.traj.status) })
}

/// Smallest `1.25^k` with `J(s u0) <= 0`.
fn nonpositive_energy_scale(u0: &Field, params: &ProblemParams, f: &Nonlinearity) -> Result<f64> {
    let mut s = 1.0;
    for _ in 0..400 {
        if energy_j(&u0.scaled(s), params, f)? <= 0.0 {
            return Ok(s);
        }
        s *= 1.25;
    }
    Err(Error::NotApplicable("no multiple of the initial datum up to 1.25^400 has J <= 0".into()))
}

fn blowup_scan(ctx: &mut Ctx) -> Result<Body> {
    let base = ctx.cfg.initial_field(&ctx.mesh)?;
    let (params, f) = (ctx.params, ctx.f.clone());
    let auto = ctx.cfg.diagnostics.scales.is_empty();
    let scales = if auto {
        let s = nonpositive_energy_scale(&base, &params, &f)?;
        vec![s, 2.0 * s]
    } else {
        ctx.cfg.diagnostics.scales.clone()
    };
    let ctx_ref: &Ctx = ctx;
    let runs: Vec<(Field, SuperRun)> = scales
        .par_iter()
        .map(|&s| {
            let u0 = base.scaled(s);
            super_run(ctx_ref, &u0).map(|r| (u0, r))
        })
        .collect::<Result<_>>()?;
    let mut scan = Table::new(&[
        "scale", "J0", "I0", "status", "escape_step", "escape_time", "final_linf", "premises_hold", "concavity_tail",
        "mpp_positive", "t_star",
    ]);
    let mut summaries = vec![];
    for (i, ((u0, run), &s)) in runs.iter().zip(&scales).enumerate() {
        ctx.write(&format!("trajectory_{i}.csv"), &trajectory_table(&run.traj, &params, &f)?)?;
        let obs = run.verdict.as_ref().and_then(|v| v.observed.clone());
        let esc = escape_step(&run.traj.status);
        scan.push(vec![
            num(s),
            num(energy_j(u0, &params, &f)?),
            num(nehari_i(u0, &params, &f)?),
            match run.traj.status {
                RunStatus::Completed => "completed".into(),
                RunStatus::BlownUp { .. } => "blown_up".into(),
                RunStatus::SolverFailed { .. } => "solver_failed".into(),
            },
            esc.map(|k| k.to_string()).unwrap_or_default(),
            esc.map(|_| num(run.traj.final_time())).unwrap_or_default(),
            num(run.traj.last().linf()),
            run.verdict.as_ref().map(|v| v.premises_hold.to_string()).unwrap_or_default(),
            obs.as_ref().map(|o| o.concavity_holds_on_tail.to_string()).unwrap_or_default(),
            obs.as_ref().map(|o| o.mpp_positive_after_first.to_string()).unwrap_or_default(),
            obs.as_ref().and_then(|o| o.t_star).map(num).unwrap_or_default(),
        ]);
        let mut sum = super_summary(u0, run, &params, &f)?;
        sum["scale"] = json!(s);
        summaries.push(sum);
    }
    ctx.write("scan.csv", &scan)?;
    // Escape steps against increasing scale.
    let mut order: Vec<usize> = (0..scales.len()).collect();
    order.sort_by(|&a, &b| scales[a].total_cmp(&scales[b]));
    let steps: Vec<Option<usize>> = order.iter().map(|&i| escape_step(&runs[i].1.traj.status)).collect();
    let all_blow = steps.iter().all(Option::is_some);
    let monotone = all_blow && steps.windows(2).all(|w| w[1] <= w[0]);
    let failure = runs.iter().find_map(|(_, r)| status_failure(&r.traj.status));
    Ok(Body {
        results: json!({
            "scales": scales,
            "scales_automatic": auto,
            "runs": summaries,
            "all_blew_up": all_blow,
            "escape_step_nonincreasing_in_scale": monotone,
        }),
        failure,
    })
}

fn sobolev(ctx: &mut Ctx) -> Result<Body> {
    let cfg = ctx.cfg;
    let d = &cfg.diagnostics;
    let meshes: Vec<Arc<Mesh>> = (0..d.probe_levels)
        .map(|k| Ok(Arc::new(cfg.mesh.refined(1 << k).build()?)))
        .collect::<Result<_>>()?;
    let family = singular_family(&meshes, &ctx.params, &cfg.solver)?;
    let rows = sobolev_probe(&family, &d.m_grid)?;
    let mut t = Table::new(&["m", "nodes", "integral", "change", "trend"]);
    for r in &rows {
        for (k, (&n, &v)) in r.nodes.iter().zip(&r.integrals).enumerate() {
            let change = if k == 0 { String::new() } else { num(r.changes[k - 1]) };
            t.push(vec![num(r.m), n.to_string(), num(v), change, json!(r.trend).as_str().unwrap_or("").into()]);
        }
    }
    ctx.write("sobolev.csv", &t)?;
    let finest = family.last().expect("at least two levels");
    ctx.write("field.csv", &field_table(finest.mesh(), &[("u", finest)]))?;
    let m_crit = ctx.params.m_crit();
    Ok(Body::ok(json!({
        "rows": rows,
        "expected": rows.iter().map(|r| json!({ "m": r.m, "below_m_crit": r.m < m_crit })).collect::<Vec<_>>(),
    })))
}

fn scaling(ctx: &mut Ctx) -> Result<Body> {
    let cfg = ctx.cfg;
    let mesh = ctx.mesh.clone();
    let ms = &cfg.diagnostics.m_schedule;
    let ws: Vec<Field> = ms.iter().map(|&m| scaled_profile(&mesh, m, &ctx.params, &cfg.solver)).collect::<Result<_>>()?;
    let mut diffs = vec![f64::NAN];
    for k in 1..ws.len() {
        diffs.push(ws[k].max_abs_diff(&ws[k - 1])?);
    }
    let ratios: Vec<f64> = diffs.windows(2).skip(1).map(|w| w[1] / w[0]).collect();
    let mut t = Table::new(&["M", "linf", "limit_residual", "diff_to_previous"]);
    for (k, (&m, w)) in ms.iter().zip(&ws).enumerate() {
        let diff = if k == 0 { String::new() } else { num(diffs[k]) };
        t.push(vec![num(m), num(w.linf()), num(limit_residual(w, &ctx.params)?), diff]);
    }
    ctx.write("scaling.csv", &t)?;
    let names: Vec<String> = ms.iter().map(|m| format!("w_{m}")).collect();
    let cols: Vec<(&str, &Field)> = names.iter().map(String::as_str).zip(&ws).collect();
    ctx.write("field.csv", &field_table(&mesh, &cols))?;
    Ok(Body::ok(json!({
        "diffs": &diffs[1..],
        "contraction_ratios": ratios,
        "rescaling_exponent": -1.0 / (ctx.params.p - 1.0 + ctx.params.delta),
    })))
}

fn torsion(ctx: &mut Ctx) -> Result<Body> {
    let cfg = ctx.cfg;
    let mesh = ctx.mesh.clone();
    let rhos = &cfg.diagnostics.rho_schedule;
    let us: Vec<Field> = rhos.iter().map(|&r| solve_torsion(&mesh, r, &ctx.params, &cfg.solver)).collect::<Result<_>>()?;
    let norms: Vec<f64> = us.iter().map(Field::linf).collect();
    let mut t = Table::new(&["rho", "max_norm"]);
    for (&r, &n) in rhos.iter().zip(&norms) {
        t.push_nums(&[r, n]);
    }
    ctx.write("torsion.csv", &t)?;
    let names: Vec<String> = rhos.iter().map(|r| format!("u_{r}")).collect();
    let cols: Vec<(&str, &Field)> = names.iter().map(String::as_str).zip(&us).collect();
    ctx.write("field.csv", &field_table(&mesh, &cols))?;
    Ok(Body::ok(json!({
        "max_norms": norms,
        "strictly_decreasing": norms.windows(2).all(|w| w[1] < w[0]),
        "final_over_first": norms.last().unwrap() / norms[0],
    })))
}
