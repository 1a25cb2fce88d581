//! Cartesian parameter sweeps, one directory per run.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::config::{parse_config_with, RunConfig};
use super::output::{ensure_dir, Table};
use super::run::run_experiment;

/// `key=v1,v2,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vary {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for Vary {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (k, vs) = s.split_once('=').ok_or_else(|| format!("`{s}` is not key=v1,v2,..."))?;
        let values: Vec<String> = vs.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if k.trim().is_empty() || values.is_empty() {
            return Err(format!("`{s}` is not key=v1,v2,..."));
        }
        Ok(Vary { key: k.trim().to_string(), values })
    }
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub id: String,
    pub assignments: Vec<(String, String)>,
    pub exit_code: i32,
    pub message: String,
}

fn combinations(vary: &[Vary]) -> Vec<Vec<(String, String)>> {
    let mut out: Vec<Vec<(String, String)>> = vec![vec![]];
    for v in vary {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                v.values.iter().map(move |val| {
                    let mut p = prefix.clone();
                    p.push((v.key.clone(), val.clone()));
                    p
                })
            })
            .collect();
    }
    out
}

/// Every combination is parsed before anything runs, so a bad value fails the whole sweep up front.
pub fn sweep(text: &str, overrides: &[String], vary: &[Vary], out: &str) -> Result<Vec<SweepRun>> {
    if vary.is_empty() {
        return Err(Error::Config("--vary: a sweep needs at least one key".into()));
    }
    let combos = combinations(vary);
    let width = (combos.len().max(2) - 1).to_string().len().max(3);
    let planned: Vec<(String, Vec<(String, String)>, RunConfig)> = combos
        .into_iter()
        .enumerate()
        .map(|(i, assign)| {
            let id = format!("run_{i:0width$}");
            let mut all: Vec<String> = overrides.to_vec();
            all.extend(assign.iter().map(|(k, v)| format!("{k}={v}")));
            all.push(format!("output.dir=\"{}\"", PathBuf::from(out).join(&id).display()));
            let cfg = parse_config_with(text, &all).map_err(|e| Error::Config(format!("{id}: {e}")))?;
            Ok((id, assign, cfg))
        })
        .collect::<Result<_>>()?;
    ensure_dir(&PathBuf::from(out))?;
    let runs: Vec<SweepRun> = planned
        .par_iter()
        .map(|(id, assign, cfg)| {
            let (exit_code, message) = match run_experiment(cfg) {
                Ok(_) => (0, "ok".to_string()),
                Err(e) => (e.exit_code(), e.to_string()),
            };
            SweepRun { id: id.clone(), assignments: assign.clone(), exit_code, message }
        })
        .collect();
    let mut header = vec!["run_id".to_string()];
    header.extend(vary.iter().map(|v| v.key.clone()));
    header.extend(["exit_code".to_string(), "message".to_string()]);
    let mut t = Table::with_header(header);
    for r in &runs {
        let mut row = vec![r.id.clone()];
        row.extend(r.assignments.iter().map(|(_, v)| v.clone()));
        row.push(r.exit_code.to_string());
        row.push(format!("\"{}\"", r.message.replace('"', "'")));
        t.push(row);
    }
    t.write(&PathBuf::from(out).join("sweep.csv"))?;
    Ok(runs)
}
