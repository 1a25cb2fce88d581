//! Command-line front end: configs, experiments, refinement studies and sweeps.

mod config;
mod output;
mod refine;
mod run;
mod sweep;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

pub use config::{
    keys_help, parse_config, parse_config_with, serialize_config, DiagnosticsSection, Experiment, InitialSpec,
    NonlinearitySpec, OutputSection, ParabolicSection, ProblemSection, RunConfig, TimeSection, KEYS,
};
pub use output::num;
pub use refine::{heat_mode, refinement_study, Axis, ErrorMode, RefineLevel, RefineReport};
pub use run::{run_experiment, RunReport};
pub use sweep::{sweep, SweepRun, Vary};

#[derive(Debug, Parser)]
#[command(name = "pqflow", version, about = "Singular (p,q)-Laplacian flows: runs, refinement studies, sweeps")]
#[command(after_long_help = keys_help())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    pub config: PathBuf,
    /// Override a configuration key, e.g. `--set problem.p=3` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured experiment.
    #[command(after_long_help = keys_help())]
    Run(Common),
    /// Run every combination of the `--vary` values in parallel.
    #[command(after_long_help = keys_help())]
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `key=v1,v2,...`; repeat to take the product.
        #[arg(long, value_name = "KEY=V1,V2,...")]
        vary: Vec<Vary>,
    },
    /// Convergence table over successive refinements.
    #[command(after_long_help = keys_help())]
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, value_enum, default_value_t = Axis::Time)]
        axis: Axis,
    },
}

fn read_config(c: &Common) -> Result<(String, Vec<String>)> {
    let text = std::fs::read_to_string(&c.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", c.config.display())))?;
    let mut set = c.set.clone();
    if let Some(out) = &c.out {
        set.push(format!("output.dir={}", toml::Value::String(out.display().to_string())));
    }
    Ok((text, set))
}

fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Run(c) => {
            let (text, set) = read_config(&c)?;
            let cfg = parse_config_with(&text, &set)?;
            let rep = run_experiment(&cfg)?;
            Ok(format!("{} finished; artifacts in {}", cfg.experiment.name(), rep.dir.display()))
        }
        Command::Sweep { common, vary } => {
            let (text, set) = read_config(&common)?;
            let base = parse_config_with(&text, &set)?;
            let runs = sweep(&text, &set, &vary, &base.output.dir)?;
            let failed: Vec<&SweepRun> = runs.iter().filter(|r| r.exit_code != 0).collect();
            match failed.first() {
                None => Ok(format!("{} runs finished; table in {}/sweep.csv", runs.len(), base.output.dir)),
                Some(r) => Err(match r.exit_code {
                    2 => Error::Config(format!("{}: {}", r.id, r.message)),
                    4 => Error::InvariantViolation(format!("{}: {}", r.id, r.message)),
                    _ => Error::SolverFailed {
                        reason: format!("{} of {} runs failed, first {}: {}", failed.len(), runs.len(), r.id, r.message),
                        iterations: 0,
                        residual: f64::NAN,
                        history: vec![],
                    },
                }),
            }
        }
        Command::Refine { common, levels, axis } => {
            let (text, set) = read_config(&common)?;
            let cfg = parse_config_with(&text, &set)?;
            let rep = refinement_study(&cfg, levels, axis)?;
            let orders: Vec<String> = rep.orders.iter().map(|o| format!("{o:.3}")).collect();
            Ok(format!("observed orders [{}]; table in {}/refine.csv", orders.join(", "), cfg.output.dir))
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
