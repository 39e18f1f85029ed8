//! Experiment plan assembly: a TOML config file, command-line flags, and the
//! `ACDS_OUT` environment variable merge into one validated [`Plan`].
//!
//! Precedence: flags override config-file values; `ACDS_OUT` overrides both
//! for the output directory.

use std::path::{Path, PathBuf};

use acds_core::activelearn::Criterion;
use acds_core::studies::{Study, StudyOverrides};
use serde::Deserialize;

use crate::RunArgs;

/// Environment variable that overrides the output directory.
pub const OUT_ENV_VAR: &str = "ACDS_OUT";

/// A fully resolved experiment: what to run and where results go.
#[derive(Debug, Clone)]
pub struct Plan {
    pub study: Study,
    pub sigma2: Vec<f64>,
    pub criteria: Vec<Criterion>,
    pub replications: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub parallel: usize,
    pub overrides: StudyOverrides,
}

/// On-disk config shape. Unknown keys are rejected so typos surface as
/// config errors instead of silently falling back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    study: Option<String>,
    sigma2: Option<Vec<f64>>,
    criteria: Option<Vec<String>>,
    replications: Option<u64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    parallel: Option<usize>,
    run: Option<FileRunOverrides>,
}

/// Optional departures from the selected study's published protocol.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRunOverrides {
    fixed_n: Option<usize>,
    n_max: Option<usize>,
    tol: Option<f64>,
    batch_size: Option<usize>,
    n_init: Option<usize>,
    normalize_weights: Option<bool>,
}

fn load_file(path: &Path) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("config file {}: {e}", path.display()))
}

fn parse_criteria(names: &[String]) -> Result<Vec<Criterion>, String> {
    names
        .iter()
        .map(|s| {
            Criterion::parse(s).ok_or_else(|| {
                let known: Vec<&str> = Criterion::ALL.iter().map(|c| c.name()).collect();
                format!("unknown criterion {s:?}; known: {}", known.join(", "))
            })
        })
        .collect()
}

/// Merges flags, optional config file, and environment into a plan.
pub fn build_plan(args: &RunArgs, env_out: Option<PathBuf>) -> Result<Plan, String> {
    let file = match &args.config {
        Some(path) => load_file(path)?,
        None => FileConfig::default(),
    };

    let study_name = args
        .study
        .clone()
        .or(file.study)
        .ok_or("no study selected: pass --study or set `study` in the config file")?;
    let study = Study::parse(&study_name).ok_or_else(|| {
        let known: Vec<&str> = Study::ALL.iter().map(|s| s.name()).collect();
        format!("unknown study {study_name:?}; known: {}", known.join(", "))
    })?;

    let sigma2 = if !args.sigma2.is_empty() {
        args.sigma2.clone()
    } else {
        file.sigma2.unwrap_or_else(|| study.default_sigma2().to_vec())
    };
    if sigma2.is_empty() {
        return Err("sigma2 list is empty".into());
    }
    for &s in &sigma2 {
        if !s.is_finite() || s < 0.0 {
            return Err(format!("sigma2 must be finite and nonnegative, got {s}"));
        }
    }
    if has_duplicates(&sigma2) {
        return Err("sigma2 list contains duplicates; cells would collide".into());
    }

    let criteria = if !args.criteria.is_empty() {
        parse_criteria(&args.criteria)?
    } else if let Some(names) = &file.criteria {
        parse_criteria(names)?
    } else {
        vec![Criterion::Acds]
    };
    if criteria.is_empty() {
        return Err("criteria list is empty".into());
    }
    if (1..criteria.len()).any(|i| criteria[..i].contains(&criteria[i])) {
        return Err("criteria list contains duplicates; cells would collide".into());
    }

    let replications = args.reps.or(file.replications).unwrap_or(1);
    if replications == 0 {
        return Err("replications must be at least 1".into());
    }

    let parallel = args.parallel.or(file.parallel).unwrap_or(1);
    if parallel == 0 {
        return Err("parallel must be at least 1".into());
    }

    let out = env_out
        .or_else(|| args.out.clone())
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("acds-results"));

    let file_run = file.run.unwrap_or_default();
    let overrides = StudyOverrides {
        fixed_n: args.fixed_n.or(file_run.fixed_n),
        n_max: file_run.n_max,
        tol: args.tol.or(file_run.tol),
        batch_size: file_run.batch_size,
        n_init: file_run.n_init,
        normalize_weights: file_run.normalize_weights,
    };
    if let Some(t) = overrides.tol {
        if !(t > 0.0) {
            return Err(format!("tol must be positive, got {t}"));
        }
    }
    if overrides.fixed_n == Some(0) {
        return Err("fixed-n must be at least 1".into());
    }

    Ok(Plan {
        study,
        sigma2,
        criteria,
        replications,
        seed: args.seed.or(file.seed).unwrap_or(0),
        out,
        parallel,
        overrides,
    })
}

fn has_duplicates(values: &[f64]) -> bool {
    (1..values.len()).any(|i| values[..i].iter().any(|v| v.to_bits() == values[i].to_bits()))
}
