//! Command implementations behind the `shiftbin` binary.

pub mod config;
pub mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use shiftbin_core::harness::{
    fit_rate, minority_majority_sweep, run_experiment_with_threads, summarize,
    verify_lemmas_with_tolerance, CellSummary, EstimatorKind, SweepRecord, TrialRecord,
};
use shiftbin_core::{BoundCurve, ExperimentConfig, RateFit, ShiftKind};

pub use config::{parse_config, parse_config_str};
use output::{fmt_real, read_records_file, records_csv, sweep_csv, to_json, write_atomically};

pub const TOOL_NAME: &str = "shiftbin";

/// Which record fields split records into separate rate fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupBy {
    pub scenario: bool,
    pub estimator: bool,
    pub tau: bool,
}

impl Default for GroupBy {
    fn default() -> Self {
        Self {
            scenario: true,
            estimator: true,
            tau: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupFit {
    pub scenario: Option<ShiftKind>,
    pub estimator: Option<EstimatorKind>,
    pub tau: Option<f64>,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
    pub bounds: Option<BoundCurve>,
}

type GroupKey = (Option<ShiftKind>, Option<EstimatorKind>, Option<u64>);

/// Splits records by `by` (groups in order of first appearance), fits the
/// rate of each group and evaluates the matching lower-bound curve on the
/// group's `(n_min, n_maj)` grid. A fit that is undefined is reported in
/// `error` rather than dropped.
pub fn group_fits(records: &[TrialRecord], by: GroupBy) -> Vec<GroupFit> {
    let key = |r: &TrialRecord| -> GroupKey {
        (
            by.scenario.then_some(r.scenario),
            by.estimator.then_some(r.estimator),
            if by.tau {
                r.tau.map(f64::to_bits)
            } else {
                None
            },
        )
    };
    let mut keys: Vec<GroupKey> = Vec::new();
    for r in records {
        let k = key(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|k| {
            let members: Vec<TrialRecord> =
                records.iter().filter(|r| key(r) == k).cloned().collect();
            let (fit, error) = match fit_rate(&members) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let scenarios: Vec<ShiftKind> = members.iter().map(|r| r.scenario).collect();
            let bounds = match scenarios.first() {
                Some(&s) if scenarios.iter().all(|&x| x == s) => {
                    let mut grid: Vec<(usize, usize)> =
                        members.iter().map(|r| (r.n_min, r.n_maj)).collect();
                    grid.sort_unstable();
                    grid.dedup();
                    BoundCurve::for_kind(s, &grid, members[0].tau).ok()
                }
                _ => None,
            };
            GroupFit {
                scenario: k.0,
                estimator: k.1,
                tau: k.2.map(f64::from_bits),
                fit,
                error,
                bounds,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    pub rate_fits: Vec<GroupFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub records: usize,
    pub config: &'a ExperimentConfig,
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn manifest<'a>(command: &'static str, cfg: &'a ExperimentConfig, records: usize) -> Manifest<'a> {
    Manifest {
        tool: TOOL_NAME,
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        records,
        config: cfg,
    }
}

/// Runs the experiment in `config` and writes `records.csv`, `summary.json`
/// and `manifest.json` into `out`.
pub fn cmd_run(
    config: &Path,
    out: &Path,
    threads: Option<usize>,
    seed: Option<u64>,
) -> Result<Vec<PathBuf>> {
    let cfg = load_config(config, seed)?;
    let records = run_experiment_with_threads(&cfg, threads).context("running experiment")?;
    let summary = Summary {
        cells: summarize(&records),
        rate_fits: group_fits(&records, GroupBy::default()),
    };
    write_atomically(
        out,
        &[
            ("records.csv", records_csv(&records)?),
            ("summary.json", to_json(&summary)?),
            (
                "manifest.json",
                to_json(&manifest("run", &cfg, records.len()))?,
            ),
        ],
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub arm: String,
    pub step: usize,
    #[serde(flatten)]
    pub cell: CellSummary,
}

/// Runs the addition schedule in the config's `[sweep]` section and writes
/// `sweep.csv`, `summary.json` and `manifest.json` into `out`.
pub fn cmd_sweep(
    config: &Path,
    out: &Path,
    threads: Option<usize>,
    seed: Option<u64>,
) -> Result<Vec<PathBuf>> {
    let cfg = load_config(config, seed)?;
    let records = minority_majority_sweep(&cfg, threads).context("running sweep")?;
    write_atomically(
        out,
        &[
            ("sweep.csv", sweep_csv(&records)?),
            ("summary.json", to_json(&sweep_summary(&records))?),
            (
                "manifest.json",
                to_json(&manifest("sweep", &cfg, records.len()))?,
            ),
        ],
    )
}

pub fn sweep_summary(records: &[SweepRecord]) -> Vec<SweepCell> {
    let mut tags: Vec<(String, usize)> = Vec::new();
    for r in records {
        let t = (r.arm.to_string(), r.step);
        if !tags.contains(&t) {
            tags.push(t);
        }
    }
    tags.into_iter()
        .flat_map(|(arm, step)| {
            let members: Vec<TrialRecord> = records
                .iter()
                .filter(|r| r.arm.as_str() == arm && r.step == step)
                .map(|r| r.record.clone())
                .collect();
            summarize(&members).into_iter().map(move |cell| SweepCell {
                arm: arm.clone(),
                step,
                cell,
            })
        })
        .collect()
}

/// Prints the lemma check table; returns whether every check passed.
pub fn cmd_verify(
    k_max: usize,
    tolerance_override: Option<f64>,
    out: &mut impl Write,
) -> Result<bool> {
    let report = verify_lemmas_with_tolerance(k_max, tolerance_override)?;
    writeln!(
        out,
        "{:<32} {:>4} {:>24} {:>24} {:>12} {:>8}",
        "check", "K", "expected", "measured", "delta", "status"
    )?;
    for c in &report.checks {
        writeln!(
            out,
            "{:<32} {:>4} {:>24} {:>24} {:>12.3e} {:>8}",
            c.name,
            c.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
            fmt_real(c.expected),
            fmt_real(c.measured),
            c.delta,
            if c.passed { "pass" } else { "FAIL" }
        )?;
    }
    let failures: Vec<_> = report.failures().collect();
    if failures.is_empty() {
        writeln!(
            out,
            "all {} checks passed (max |delta| = {:.3e})",
            report.checks.len(),
            report.max_abs_delta()
        )?;
    } else {
        writeln!(
            out,
            "{} of {} checks FAILED:",
            failures.len(),
            report.checks.len()
        )?;
        for c in failures {
            writeln!(
                out,
                "  {} (K = {}): delta {:.6e} >= tolerance {:.3e}",
                c.name,
                c.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
                c.delta,
                c.tolerance
            )?;
        }
    }
    Ok(report.all_passed())
}

/// Fits rates per group from a records CSV, prints them with the lower-bound
/// curves, and optionally writes `rates.json` into `out`.
pub fn cmd_rates(
    records: &Path,
    by: GroupBy,
    out: Option<&Path>,
    w: &mut impl Write,
) -> Result<()> {
    let records = read_records_file(records)?;
    let fits = group_fits(&records, by);
    for g in &fits {
        let label = [
            g.scenario.map(|s| format!("scenario={s}")),
            g.estimator.map(|e| format!("estimator={e}")),
            g.tau.map(|t| format!("tau={t}")),
        ]
        .into_iter()
        .flatten()
        .collect::<Vec<_>>()
        .join(" ");
        let label = if label.is_empty() {
            "all".to_string()
        } else {
            label
        };
        match (&g.fit, &g.error) {
            (Some(f), _) => writeln!(
                w,
                "{label}: slope={:.6} intercept={:.6} r_squared={:.6} n_points={}",
                f.slope, f.intercept, f.r_squared, f.n_points
            )?,
            (None, Some(e)) => writeln!(w, "{label}: {e}")?,
            (None, None) => unreachable!("a group fit carries a fit or an error"),
        }
        if let Some(curve) = &g.bounds {
            for p in &curve.points {
                writeln!(
                    w,
                    "  lower_bound n_min={} n_maj={} value={}",
                    p.n_min,
                    p.n_maj,
                    fmt_real(p.value)
                )?;
            }
        }
    }
    if let Some(dir) = out {
        write_atomically(dir, &[("rates.json", to_json(&fits)?)])?;
    }
    Ok(())
}
