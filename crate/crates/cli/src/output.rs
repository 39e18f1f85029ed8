//! Run execution and result files.
//!
//! One `run` invocation produces, inside the output directory:
//!   - `runs.csv` — one row per run, in (sigma2, criterion, replication) order;
//!   - `summary.csv` — per-cell mean/std of the recovery metrics;
//!   - `records/<study>-s<i>-<criterion>-r<rep>.json` — the full trace of
//!     each run, wrapped in a versioned envelope.
//!
//! Replications execute concurrently (bounded by the plan's `parallel`), but
//! a single writer emits rows in task order, so outputs are byte-identical
//! for a fixed plan regardless of scheduling. `verify` re-derives
//! `summary.csv` from `runs.csv` through the same code path and demands byte
//! equality.

use std::fmt::Write as _;
use std::path::Path;

use acds_core::activelearn::{mix_seed, Criterion, RunRecord};
use acds_core::studies::{run_study, Study, StudyContext};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Plan;

/// Version stamp written into every JSON run record.
const SCHEMA_VERSION: u32 = 1;

const RUNS_HEADER: &str =
    "study,sigma2,criterion,replication,seed,gamma,l2_beta,n_total,converged,iterations,status";
const SUMMARY_HEADER: &str = "study,sigma2,criterion,completed,gamma_mean,gamma_std,\
                              l2_beta_mean,l2_beta_std,n_mean,n_std";

/// Aggregate outcome of one `run` invocation.
pub struct ExecutionReport {
    pub total: usize,
    pub aborted: usize,
}

struct TaskOutcome {
    sigma2_idx: usize,
    criterion: Criterion,
    replication: u64,
    seed: u64,
    /// `Some(message)` when the run aborted.
    error: Option<String>,
    record: RunRecord,
}

/// Envelope for the per-run JSON file.
#[derive(Serialize)]
struct RecordEnvelope<'a> {
    schema_version: u32,
    study: &'a str,
    sigma2: f64,
    criterion: &'a str,
    replication: u64,
    seed: u64,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    record: &'a RunRecord,
}

/// Solves the study's shared oracle once, before threads race on it.
fn prewarm(ctx: &StudyContext, study: Study) -> Result<(), String> {
    let outcome = match study {
        Study::OdeLinear => ctx.ode_table().map(|_| ()),
        Study::Burgers => ctx.burgers_snapshot().map(|_| ()),
        Study::Diffusion2d => ctx.diffusion_snapshot().map(|_| ()),
        Study::OdeRandom | Study::Bass => Ok(()),
    };
    outcome.map_err(|e| format!("cannot prepare the {} oracle: {e}", study.name()))
}

/// Runs the whole plan and writes all output files.
pub fn execute(plan: &Plan) -> Result<ExecutionReport, String> {
    let records_dir = plan.out.join("records");
    std::fs::create_dir_all(&records_dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", records_dir.display()))?;

    let ctx = StudyContext::new();
    prewarm(&ctx, plan.study)?;
    let study_idx = Study::ALL
        .iter()
        .position(|s| *s == plan.study)
        .expect("study is one of Study::ALL") as u64;

    let mut tasks = Vec::new();
    for sigma2_idx in 0..plan.sigma2.len() {
        for &criterion in &plan.criteria {
            for replication in 0..plan.replications {
                tasks.push((sigma2_idx, criterion, replication));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.parallel)
        .build()
        .map_err(|e| format!("cannot start {} worker threads: {e}", plan.parallel))?;
    let outcomes: Vec<TaskOutcome> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(sigma2_idx, criterion, replication)| {
                let seed = mix_seed(
                    plan.seed,
                    &[study_idx, sigma2_idx as u64, criterion as u64, replication],
                );
                let result = run_study(
                    &ctx,
                    plan.study,
                    criterion,
                    plan.sigma2[sigma2_idx],
                    seed,
                    &plan.overrides,
                );
                let (error, record) = match result {
                    Ok(record) => (None, record),
                    Err(failure) => (Some(failure.error.to_string()), failure.partial),
                };
                TaskOutcome {
                    sigma2_idx,
                    criterion,
                    replication,
                    seed,
                    error,
                    record,
                }
            })
            .collect()
    });

    let rows: Vec<RunRow> = outcomes
        .iter()
        .map(|o| RunRow {
            study: plan.study.name().to_string(),
            sigma2: format_f64(plan.sigma2[o.sigma2_idx]),
            criterion: o.criterion.name().to_string(),
            replication: o.replication,
            seed: o.seed,
            gamma: o.record.metrics.as_ref().map(|m| m.gamma as f64),
            l2_beta: o.record.metrics.as_ref().map(|m| m.l2_beta),
            n_total: o.record.n_total as f64,
            converged: o.record.converged,
            iterations: o.record.iterations.len() as u64,
            ok: o.error.is_none(),
        })
        .collect();

    write_file(&plan.out.join("runs.csv"), &format_runs_csv(&rows))?;
    write_file(
        &plan.out.join("summary.csv"),
        &format_summary_csv(&summarize(&rows)),
    )?;

    for o in &outcomes {
        let status = if o.error.is_none() { "ok" } else { "aborted" };
        let envelope = RecordEnvelope {
            schema_version: SCHEMA_VERSION,
            study: plan.study.name(),
            sigma2: plan.sigma2[o.sigma2_idx],
            criterion: o.criterion.name(),
            replication: o.replication,
            seed: o.seed,
            status,
            error: o.error.as_deref(),
            record: &o.record,
        };
        let name = format!(
            "{}-s{}-{}-r{:03}.json",
            plan.study.name(),
            o.sigma2_idx,
            o.criterion.name(),
            o.replication
        );
        let body = serde_json::to_string_pretty(&envelope)
            .map_err(|e| format!("cannot serialize run record: {e}"))?;
        write_file(&records_dir.join(name), &body)?;
    }

    Ok(ExecutionReport {
        total: outcomes.len(),
        aborted: outcomes.iter().filter(|o| o.error.is_some()).count(),
    })
}

/// One `runs.csv` row, as written or as parsed back.
struct RunRow {
    study: String,
    sigma2: String,
    criterion: String,
    replication: u64,
    seed: u64,
    gamma: Option<f64>,
    l2_beta: Option<f64>,
    n_total: f64,
    converged: bool,
    iterations: u64,
    ok: bool,
}

/// Shortest-roundtrip decimal form; parses back to the identical bits.
fn format_f64(v: f64) -> String {
    format!("{v}")
}

fn format_runs_csv(rows: &[RunRow]) -> String {
    let mut text = String::from(RUNS_HEADER);
    text.push('\n');
    for r in rows {
        let gamma = r.gamma.map(format_f64).unwrap_or_default();
        let l2 = r.l2_beta.map(format_f64).unwrap_or_default();
        let status = if r.ok { "ok" } else { "aborted" };
        writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.study,
            r.sigma2,
            r.criterion,
            r.replication,
            r.seed,
            gamma,
            l2,
            format_f64(r.n_total),
            r.converged,
            r.iterations,
            status,
        )
        .expect("writing to String cannot fail");
    }
    text
}

struct SummaryRow {
    study: String,
    sigma2: String,
    criterion: String,
    completed: usize,
    /// (gamma, l2_beta, n_total) each as (mean, std); absent when no run
    /// in the cell completed.
    stats: Option<[(f64, f64); 3]>,
}

/// Mean and sample standard deviation (n−1 denominator; 0 when n = 1).
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Groups rows into (sigma2, criterion) cells in first-seen order and
/// aggregates the completed runs of each cell.
fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut cells: Vec<(String, String, String)> = Vec::new();
    for r in rows {
        let key = (r.study.clone(), r.sigma2.clone(), r.criterion.clone());
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    cells
        .into_iter()
        .map(|(study, sigma2, criterion)| {
            let complete: Vec<&RunRow> = rows
                .iter()
                .filter(|r| {
                    r.study == study
                        && r.sigma2 == sigma2
                        && r.criterion == criterion
                        && r.ok
                        && r.gamma.is_some()
                        && r.l2_beta.is_some()
                })
                .collect();
            let stats = if complete.is_empty() {
                None
            } else {
                let collect = |f: &dyn Fn(&RunRow) -> f64| {
                    complete.iter().map(|r| f(r)).collect::<Vec<f64>>()
                };
                Some([
                    mean_std(&collect(&|r| r.gamma.expect("filtered"))),
                    mean_std(&collect(&|r| r.l2_beta.expect("filtered"))),
                    mean_std(&collect(&|r| r.n_total)),
                ])
            };
            SummaryRow {
                study,
                sigma2,
                criterion,
                completed: complete.len(),
                stats,
            }
        })
        .collect()
}

fn format_summary_csv(rows: &[SummaryRow]) -> String {
    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    for r in rows {
        let cols = match &r.stats {
            Some([gamma, l2, n]) => [
                format_f64(gamma.0),
                format_f64(gamma.1),
                format_f64(l2.0),
                format_f64(l2.1),
                format_f64(n.0),
                format_f64(n.1),
            ]
            .join(","),
            None => ",,,,,".to_string(),
        };
        writeln!(
            text,
            "{},{},{},{},{}",
            r.study, r.sigma2, r.criterion, r.completed, cols
        )
        .expect("writing to String cannot fail");
    }
    text
}

fn write_file(path: &Path, content: &str) -> Result<(), String> {
    std::fs::write(path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn read_file(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

/// Parses `runs.csv` back into rows; rejects malformed files.
fn parse_runs_csv(text: &str) -> Result<Vec<RunRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == RUNS_HEADER => {}
        Some(other) => return Err(format!("unexpected runs.csv header: {other:?}")),
        None => return Err("runs.csv is empty".into()),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(format!(
                "runs.csv row {}: expected 11 fields, found {}",
                idx + 2,
                fields.len()
            ));
        }
        let parse_f64 = |name: &str, s: &str| -> Result<f64, String> {
            s.parse::<f64>()
                .map_err(|e| format!("runs.csv row {}: bad {name} {s:?}: {e}", idx + 2))
        };
        let opt_f64 = |name: &str, s: &str| -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f64(name, s).map(Some)
            }
        };
        let ok = match fields[10] {
            "ok" => true,
            "aborted" => false,
            other => return Err(format!("runs.csv row {}: bad status {other:?}", idx + 2)),
        };
        rows.push(RunRow {
            study: fields[0].to_string(),
            sigma2: fields[1].to_string(),
            criterion: fields[2].to_string(),
            replication: fields[3]
                .parse()
                .map_err(|e| format!("runs.csv row {}: bad replication: {e}", idx + 2))?,
            seed: fields[4]
                .parse()
                .map_err(|e| format!("runs.csv row {}: bad seed: {e}", idx + 2))?,
            gamma: opt_f64("gamma", fields[5])?,
            l2_beta: opt_f64("l2_beta", fields[6])?,
            n_total: parse_f64("n_total", fields[7])?,
            converged: match fields[8] {
                "true" => true,
                "false" => false,
                other => {
                    return Err(format!("runs.csv row {}: bad converged {other:?}", idx + 2))
                }
            },
            iterations: fields[9]
                .parse()
                .map_err(|e| format!("runs.csv row {}: bad iterations: {e}", idx + 2))?,
            ok,
        });
    }
    Ok(rows)
}

/// Recomputes `summary.csv` from `runs.csv` and demands byte equality with
/// the stored file.
pub fn verify(dir: &Path) -> Result<(), String> {
    let rows = parse_runs_csv(&read_file(&dir.join("runs.csv"))?)?;
    let expected = format_summary_csv(&summarize(&rows));
    let stored = read_file(&dir.join("summary.csv"))?;
    if stored == expected {
        return Ok(());
    }
    for (i, (exp, got)) in expected.lines().zip(stored.lines()).enumerate() {
        if exp != got {
            return Err(format!(
                "summary.csv line {} does not match runs.csv: expected {exp:?}, found {got:?}",
                i + 1
            ));
        }
    }
    Err(format!(
        "summary.csv length differs from the recomputation: expected {} lines, found {}",
        expected.lines().count(),
        stored.lines().count()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(sigma2: &str, criterion: &str, rep: u64, l2: f64, ok: bool) -> RunRow {
        RunRow {
            study: "bass".into(),
            sigma2: sigma2.into(),
            criterion: criterion.into(),
            replication: rep,
            seed: rep,
            gamma: ok.then_some(1.0),
            l2_beta: ok.then_some(l2),
            n_total: 48.0,
            converged: ok,
            iterations: 3,
            ok,
        }
    }

    #[test]
    fn summaries_use_sample_standard_deviation() {
        let rows = vec![
            row("0.04", "acds", 0, 1.0, true),
            row("0.04", "acds", 1, 3.0, true),
        ];
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 1);
        let [_, l2, n] = summary[0].stats.expect("completed cell");
        assert_eq!(l2.0, 2.0);
        assert!((l2.1 - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(n, (48.0, 0.0));
    }

    #[test]
    fn aborted_runs_are_excluded_from_summaries_but_counted_in_rows() {
        let rows = vec![
            row("0.04", "acds", 0, 5.0, true),
            row("0.04", "acds", 1, 9.0, false),
        ];
        let summary = summarize(&rows);
        assert_eq!(summary[0].completed, 1);
        let text = format_runs_csv(&rows);
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().ends_with(",aborted"));
    }

    #[test]
    fn runs_csv_roundtrips_through_the_parser() {
        let rows = vec![
            row("0.04", "acds", 0, 0.123456789012345, true),
            row("0.04", "maximin-only", 0, 7.0, false),
            row("0.25", "acds", 0, 2.5e-7, true),
        ];
        let text = format_runs_csv(&rows);
        let parsed = parse_runs_csv(&text).unwrap();
        assert_eq!(format_runs_csv(&parsed), text);
        assert_eq!(
            format_summary_csv(&summarize(&parsed)),
            format_summary_csv(&summarize(&rows))
        );
    }

    #[test]
    fn empty_cells_keep_their_place_in_the_summary() {
        let rows = vec![row("0.04", "acds", 0, 1.0, false)];
        let text = format_summary_csv(&summarize(&rows));
        let line = text.lines().nth(1).unwrap();
        assert_eq!(line, "bass,0.04,acds,0,,,,,,");
    }
}
