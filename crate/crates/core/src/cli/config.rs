//! Run configuration: TOML with `[section]` headers, strict keys.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::BlowupInputs;
use crate::elliptic::{solve_steady_state, EllipticConfig};
use crate::error::{Error, Result};
use crate::mesh::{phi_delta, Mesh, MeshSpec};
use crate::operators::{Field, Forcing, Nonlinearity, ProblemParams, SubhomogFamily};
use crate::parabolic::ParabolicConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Stationary,
    ParabolicSub,
    ParabolicSuper,
    BlowupScan,
    SobolevProbe,
    ScalingProbe,
    TorsionLimit,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Stationary => "stationary",
            Experiment::ParabolicSub => "parabolic_sub",
            Experiment::ParabolicSuper => "parabolic_super",
            Experiment::BlowupScan => "blowup_scan",
            Experiment::SobolevProbe => "sobolev_probe",
            Experiment::ScalingProbe => "scaling_probe",
            Experiment::TorsionLimit => "torsion_limit",
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Experiment::ParabolicSub | Experiment::ParabolicSuper | Experiment::BlowupScan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub theta: f64,
    /// Admit `q == p` for closed-form checks.
    #[serde(default)]
    pub verification: bool,
}

impl ProblemSection {
    pub fn params(&self) -> Result<ProblemParams> {
        if self.verification {
            ProblemParams::coincident(self.p, self.q, self.delta, self.theta)
        } else {
            ProblemParams::new(self.p, self.q, self.delta, self.theta)
        }
    }
}

/// Reaction term `f(x, u)` or forcing `g(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    #[default]
    None,
    /// `g = c`.
    Constant { c: f64 },
    /// `g = amplitude * sin(omega t)`.
    TimeSine { amplitude: f64, omega: f64 },
    /// `f = a * min(s^exponent, 1)`.
    Saturated { a: f64, exponent: f64 },
    /// `f = a * s^k + c`.
    PowerConst { a: f64, k: f64, c: f64 },
    /// `f = c |s|^(r-2) s`.
    Power { r: f64, c: f64 },
}

impl NonlinearitySpec {
    pub fn build(&self) -> Nonlinearity {
        match *self {
            NonlinearitySpec::None => Nonlinearity::None,
            NonlinearitySpec::Constant { c } => Nonlinearity::Frozen(Forcing::Const(c)),
            NonlinearitySpec::TimeSine { amplitude, omega } => {
                Nonlinearity::Frozen(Forcing::TimeSine { amplitude, omega })
            }
            NonlinearitySpec::Saturated { a, exponent } => {
                Nonlinearity::Subhomog(SubhomogFamily::Saturated { a, exponent })
            }
            NonlinearitySpec::PowerConst { a, k, c } => Nonlinearity::Subhomog(SubhomogFamily::PowerConst { a, k, c }),
            NonlinearitySpec::Power { r, c } => Nonlinearity::power(r, c),
        }
    }
}

/// Initial datum for time-dependent runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `amplitude * Π sin(π x_i / L_i)`.
    Sine {
        amplitude: f64,
        #[serde(default)]
        noise: f64,
    },
    /// `amplitude * φ_δ(d(x)) / max φ_δ(d)`.
    Profile {
        amplitude: f64,
        #[serde(default)]
        noise: f64,
    },
    /// Lower barrier of the steady-state iteration.
    Subsolution,
    /// The steady state itself.
    SteadyState,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Sine { amplitude: 1.0, noise: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub t_end: f64,
    pub steps: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { t_end: 1.0, steps: 100 }
    }
}

/// Time-loop knobs; the stationary tolerances live in `[solver]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParabolicSection {
    pub blow_cap_factor: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub picard_contraction: f64,
}

impl Default for ParabolicSection {
    fn default() -> Self {
        let d = ParabolicConfig::default();
        ParabolicSection {
            blow_cap_factor: d.blow_cap_factor,
            picard_tol: d.picard_tol,
            picard_max: d.picard_max,
            picard_contraction: d.picard_contraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    /// Embedding constant of the small-singularity blow-up case.
    pub c_star: Option<f64>,
    pub lambda_star: Option<f64>,
    /// Lower bound for the Nehari infimum.
    pub theta_hat: Option<f64>,
    /// Concavity exponent in `(1, p/2)`.
    pub sigma: Option<f64>,
    /// Gradient exponents of the integrability probe.
    pub m_grid: Vec<f64>,
    /// Refinement levels of the integrability probe.
    pub probe_levels: usize,
    pub rho_schedule: Vec<f64>,
    pub m_schedule: Vec<f64>,
    /// Multipliers of the initial datum in a blow-up scan; empty means the
    /// smallest `1.25^k` with `J <= 0` and its double.
    pub scales: Vec<f64>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            c_star: None,
            lambda_star: None,
            theta_hat: None,
            sigma: None,
            m_grid: vec![1.0, 3.0, 8.0],
            probe_levels: 3,
            rho_schedule: vec![1.0, 0.1, 0.01, 0.001],
            m_schedule: vec![10.0, 100.0, 1000.0],
            scales: vec![],
        }
    }
}

impl DiagnosticsSection {
    pub fn blowup_inputs(&self) -> BlowupInputs {
        BlowupInputs {
            theta_hat: self.theta_hat,
            c_star: self.c_star,
            lambda_star: self.lambda_star,
            sigma: self.sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Seed of the initial-datum perturbation.
    #[serde(default)]
    pub seed: u64,
    pub mesh: MeshSpec,
    pub problem: ProblemSection,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub solver: EllipticConfig,
    #[serde(default)]
    pub parabolic: ParabolicSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Every accepted key with a short description.
pub const KEYS: &[(&str, &str)] = &[
    ("experiment", "stationary | parabolic_sub | parabolic_super | blowup_scan | sobolev_probe | scaling_probe | torsion_limit"),
    ("seed", "seed of the initial-datum perturbation (default 0)"),
    ("mesh.kind", "interval (a, b, n) | rect (ax, bx, ay, by, nx, ny); at least 2 cells per axis"),
    ("problem.p", "leading exponent, p > 1"),
    ("problem.q", "second exponent, 1 < q < p"),
    ("problem.delta", "singular exponent, delta > 0; time-dependent runs need delta < 2 + 1/(p-1)"),
    ("problem.theta", "singular coefficient, theta >= 0"),
    ("problem.verification", "admit q == p for closed-form checks (default false)"),
    ("nonlinearity.kind", "none | constant (c) | time_sine (amplitude, omega) | saturated (a, exponent) | power_const (a, k, c) | power (r, c)"),
    ("initial.kind", "sine (amplitude, noise) | profile (amplitude, noise) | subsolution | steady_state"),
    ("time.t_end", "final time (default 1)"),
    ("time.steps", "number of uniform steps N0 (default 100)"),
    ("solver.eps_schedule", "regularization levels, strictly decreasing (default 1e-1 .. 1e-8)"),
    ("solver.newton_tol", "relative residual tolerance (default 1e-10)"),
    ("solver.max_newton", "Newton iterations per level (default 200)"),
    ("solver.damping", "line-search backtracking factor (default 0.5)"),
    ("solver.armijo", "sufficient-decrease constant (default 1e-4)"),
    ("parabolic.blow_cap_factor", "blow-up once max|u| exceeds this multiple of max|u0| (default 1e8)"),
    ("parabolic.picard_tol", "Picard stopping tolerance, relative (default 1e-10)"),
    ("parabolic.picard_max", "Picard sweeps per window (default 60)"),
    ("parabolic.picard_contraction", "target window length times Lipschitz constant (default 0.5)"),
    ("diagnostics.c_star", "embedding constant, required for blow-up verdicts with delta <= 1"),
    ("diagnostics.lambda_star", "first threshold on theta, required with delta <= 1"),
    ("diagnostics.theta_hat", "lower bound for the Nehari infimum, required with delta <= 1"),
    ("diagnostics.sigma", "concavity exponent in (1, p/2); default midpoint when p > 2"),
    ("diagnostics.m_grid", "gradient exponents of the integrability probe (default [1, 3, 8])"),
    ("diagnostics.probe_levels", "meshes n, 2n, 4n, ... of the integrability probe (default 3)"),
    ("diagnostics.rho_schedule", "torsion sources (default [1, 0.1, 0.01, 0.001])"),
    ("diagnostics.m_schedule", "singular coefficients of the scaling probe (default [10, 100, 1000])"),
    ("diagnostics.scales", "initial-datum multipliers of a blow-up scan (default: automatic)"),
    ("output.dir", "output directory (default out)"),
];

pub fn keys_help() -> String {
    let width = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys:\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:width$}  {d}\n"));
    }
    s
}

fn cfg_err(key: &str, rule: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {rule}"))
}

/// Parse a `key=value` override; the value is read as a TOML literal, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key `{key}`")));
    }
    let mut table = root;
    for part in &path[..path.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| cfg_err(key, format!("`{part}` is not a section")))?;
    }
    table.insert(path[path.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Parse, apply `key=value` overrides and validate.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut root: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let merged = toml::to_string(&root).map_err(|e| Error::Config(e.to_string()))?;
    let cfg: RunConfig = toml::from_str(&merged).map_err(|e: toml::de::Error| Error::Config(e.to_string().trim_end().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &[])
}

pub fn serialize_config(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(key, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn params(&self) -> Result<ProblemParams> {
        self.problem.params().map_err(|e| match e {
            Error::InvalidParams(m) => Error::InvalidParams(format!("problem: {m}")),
            other => other,
        })
    }

    pub fn parabolic_config(&self) -> ParabolicConfig {
        ParabolicConfig {
            elliptic: self.solver.clone(),
            blow_cap_factor: self.parabolic.blow_cap_factor,
            picard_tol: self.parabolic.picard_tol,
            picard_max: self.parabolic.picard_max,
            picard_contraction: self.parabolic.picard_contraction,
        }
    }

    pub fn mesh(&self) -> Result<Arc<Mesh>> {
        Ok(Arc::new(self.mesh.build()?))
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.params()?;
        self.mesh.build()?;
        self.solver.validate().map_err(|e| match e {
            Error::Config(m) => cfg_err("solver", m),
            other => other,
        })?;
        self.parabolic_config().validate().map_err(|e| match e {
            Error::Config(m) => cfg_err("parabolic", m),
            other => other,
        })?;
        let f = self.nonlinearity.build();
        if self.experiment.is_time_dependent() {
            params.require_subcritical().map_err(|e| match e {
                Error::InvalidParams(m) => {
                    Error::InvalidParams(format!("problem.delta: {m} (required by {})", self.experiment.name()))
                }
                other => other,
            })?;
            positive("time.t_end", self.time.t_end)?;
            if self.time.steps == 0 {
                return Err(cfg_err("time.steps", "must be at least 1"));
            }
        }
        match self.experiment {
            Experiment::Stationary | Experiment::ParabolicSub => {
                if f.power_growth().is_some() {
                    return Err(cfg_err(
                        "nonlinearity.kind",
                        format!("`power` needs experiment parabolic_super or blowup_scan, not {}", self.experiment.name()),
                    ));
                }
            }
            Experiment::ParabolicSuper | Experiment::BlowupScan => {
                if !matches!(f, Nonlinearity::Superhomog(_)) {
                    return Err(cfg_err("nonlinearity.kind", format!("{} needs kind = \"power\"", self.experiment.name())));
                }
            }
            _ => {}
        }
        if let Nonlinearity::Superhomog(pw) = f {
            if !(pw.r > params.q) || !(pw.c > 0.0) {
                return Err(cfg_err("nonlinearity", format!("power reaction needs r > q and c > 0, got r={}, c={}", pw.r, pw.c)));
            }
        }
        if matches!(self.experiment, Experiment::Stationary) && matches!(self.nonlinearity, NonlinearitySpec::TimeSine { .. }) {
            return Err(cfg_err("nonlinearity.kind", "time_sine is a time-dependent forcing"));
        }
        if matches!(self.initial, InitialSpec::Subsolution | InitialSpec::SteadyState)
            && !matches!(self.experiment, Experiment::ParabolicSub)
        {
            return Err(cfg_err("initial.kind", "subsolution and steady_state starts need experiment parabolic_sub"));
        }
        if let InitialSpec::Sine { amplitude, noise } | InitialSpec::Profile { amplitude, noise } = self.initial {
            positive("initial.amplitude", amplitude)?;
            if !(0.0..1.0).contains(&noise) {
                return Err(cfg_err("initial.noise", format!("must lie in [0, 1), got {noise}")));
            }
        }
        let d = &self.diagnostics;
        for (k, v) in [("diagnostics.c_star", d.c_star), ("diagnostics.lambda_star", d.lambda_star)] {
            if let Some(v) = v {
                positive(k, v)?;
            }
        }
        if let Some(s) = d.sigma {
            if !(s > 1.0 && s < params.p / 2.0) {
                return Err(cfg_err("diagnostics.sigma", format!("must lie in (1, p/2) = (1, {}), got {s}", params.p / 2.0)));
            }
        }
        match self.experiment {
            Experiment::SobolevProbe => {
                if !(params.delta > 1.0) {
                    return Err(cfg_err("problem.delta", "the integrability probe needs delta > 1"));
                }
                if d.m_grid.is_empty() || d.m_grid.iter().any(|m| !(*m >= 1.0)) {
                    return Err(cfg_err("diagnostics.m_grid", "needs entries >= 1"));
                }
                if d.probe_levels < 2 {
                    return Err(cfg_err("diagnostics.probe_levels", "must be at least 2"));
                }
            }
            Experiment::TorsionLimit => {
                if d.rho_schedule.is_empty() || d.rho_schedule.iter().any(|r| !(*r > 0.0)) {
                    return Err(cfg_err("diagnostics.rho_schedule", "needs positive entries"));
                }
            }
            Experiment::ScalingProbe => {
                if d.m_schedule.len() < 2 || d.m_schedule.iter().any(|m| !(*m >= 1.0)) {
                    return Err(cfg_err("diagnostics.m_schedule", "needs at least two entries, all >= 1"));
                }
            }
            Experiment::BlowupScan => {
                if d.scales.iter().any(|s| !(*s > 0.0)) {
                    return Err(cfg_err("diagnostics.scales", "needs positive entries"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The configured initial datum, perturbed deterministically from `seed`.
    pub fn initial_field(&self, mesh: &Arc<Mesh>) -> Result<Field> {
        let params = self.params()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let perturb = |u: Field, noise: f64, rng: &mut ChaCha8Rng| -> Field {
            if noise == 0.0 {
                return u;
            }
            let vals = u.values().iter().map(|v| v * (1.0 + noise * rng.gen_range(-1.0..1.0))).collect();
            u.with_values(vals)
        };
        match self.initial {
            InitialSpec::Sine { amplitude, noise } => {
                let lo = mesh.nodes()[0];
                let hi = mesh.nodes()[mesh.len() - 1];
                let dim = mesh.dim();
                let u = Field::from_fn_dirichlet(mesh.clone(), |x| {
                    (0..dim).map(|i| (PI * (x[i] - lo[i]) / (hi[i] - lo[i])).sin()).product::<f64>() * amplitude
                });
                Ok(perturb(u, noise, &mut rng))
            }
            InitialSpec::Profile { amplitude, noise } => {
                let a = mesh.profile_constant();
                let phi: Vec<f64> = mesh
                    .dist()
                    .iter()
                    .map(|&d| phi_delta(d, params.delta, params.p, a))
                    .collect::<Result<_>>()?;
                let top = phi.iter().cloned().fold(0.0, f64::max);
                let u = Field::new(mesh.clone(), phi.iter().map(|v| amplitude * v / top).collect())?;
                Ok(perturb(u, noise, &mut rng))
            }
            InitialSpec::Subsolution => {
                Ok(solve_steady_state(mesh, &self.nonlinearity.build(), &params, &self.solver)?.sub)
            }
            InitialSpec::SteadyState => {
                Ok(solve_steady_state(mesh, &self.nonlinearity.build(), &params, &self.solver)?.u)
            }
        }
    }
}
