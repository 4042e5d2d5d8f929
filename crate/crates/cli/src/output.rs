use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use shiftbin_core::harness::{SweepRecord, TrialRecord};
use tempfile::NamedTempFile;

pub const RECORD_COLUMNS: [&str; 12] = [
    "scenario",
    "estimator",
    "n_min",
    "n_maj",
    "tau",
    "K_bins",
    "replication_id",
    "seed_used",
    "risk",
    "bayes_risk",
    "excess_risk",
    "wall_time_seconds",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn record_fields(r: &TrialRecord) -> [String; 12] {
    [
        r.scenario.to_string(),
        r.estimator.to_string(),
        r.n_min.to_string(),
        r.n_maj.to_string(),
        r.tau.map(fmt_real).unwrap_or_default(),
        r.k_bins.to_string(),
        r.replication_id.to_string(),
        r.seed_used.to_string(),
        fmt_real(r.risk),
        fmt_real(r.bayes_risk),
        fmt_real(r.excess_risk),
        r.wall_time_seconds.map(fmt_real).unwrap_or_default(),
    ]
}

pub fn records_csv(records: &[TrialRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record(record_fields(r))?;
    }
    w.into_inner().map_err(|e| anyhow!("{e}"))
}

pub fn sweep_csv(records: &[SweepRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["arm", "step"].iter().chain(RECORD_COLUMNS.iter()))?;
    for s in records {
        let head = [s.arm.to_string(), s.step.to_string()];
        w.write_record(head.iter().chain(record_fields(&s.record).iter()))?;
    }
    w.into_inner().map_err(|e| anyhow!("{e}"))
}

/// Parses records written by [`records_csv`] (extra leading columns, as in
/// sweep output, are ignored). Errors name the missing column or the
/// offending row.
pub fn read_records_csv(input: impl Read) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().context("reading CSV header")?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let mut cols = [0usize; 12];
    for (slot, name) in cols.iter_mut().zip(RECORD_COLUMNS) {
        *slot = *index
            .get(name)
            .ok_or_else(|| anyhow!("records CSV is missing required column `{name}`"))?;
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        // Data rows are numbered from 1; line numbers add the header.
        let line = i + 2;
        let row = row.with_context(|| format!("malformed CSV at line {line}"))?;
        let field = |c: usize| -> Result<&str> {
            row.get(cols[c])
                .ok_or_else(|| anyhow!("line {line}: missing field `{}`", RECORD_COLUMNS[c]))
        };
        let parse = |c: usize| -> Result<f64> {
            field(c)?
                .parse()
                .map_err(|_| anyhow!("line {line}: bad number in column `{}`", RECORD_COLUMNS[c]))
        };
        let parse_int = |c: usize| -> Result<u64> {
            field(c)?
                .parse()
                .map_err(|_| anyhow!("line {line}: bad integer in column `{}`", RECORD_COLUMNS[c]))
        };
        let optional = |c: usize| -> Result<Option<f64>> {
            if field(c)?.is_empty() {
                Ok(None)
            } else {
                parse(c).map(Some)
            }
        };
        out.push(TrialRecord {
            scenario: field(0)?.parse().map_err(|e| anyhow!("line {line}: {e}"))?,
            estimator: field(1)?.parse().map_err(|e| anyhow!("line {line}: {e}"))?,
            n_min: parse_int(2)? as usize,
            n_maj: parse_int(3)? as usize,
            tau: optional(4)?,
            k_bins: parse_int(5)? as usize,
            replication_id: u32::try_from(parse_int(6)?)
                .map_err(|_| anyhow!("line {line}: replication_id out of range"))?,
            seed_used: parse_int(7)?,
            risk: parse(8)?,
            bayes_risk: parse(9)?,
            excess_risk: parse(10)?,
            wall_time_seconds: optional(11)?,
        });
    }
    Ok(out)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes all `files` into `dir` through temporary files, renaming each into
/// place only once every file has been written. On failure the temporary
/// files are removed and no target is touched.
pub fn write_atomically(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = NamedTempFile::new_in(dir)
            .with_context(|| format!("creating temporary file in {}", dir.display()))?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, target) in staged {
        tmp.persist(&target)
            .with_context(|| format!("moving output into {}", target.display()))?;
        written.push(target);
    }
    Ok(written)
}

pub fn read_records_file(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let records = read_records_csv(file).with_context(|| format!("in {}", path.display()))?;
    if records.is_empty() {
        bail!("{} has no records", path.display());
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use shiftbin_core::harness::EstimatorKind;
    use shiftbin_core::ShiftKind;

    fn rec() -> TrialRecord {
        TrialRecord {
            scenario: ShiftKind::GroupShift,
            estimator: EstimatorKind::FullBinning,
            n_min: 8,
            n_maj: 32,
            tau: Some(0.1),
            k_bins: 2,
            replication_id: 3,
            seed_used: 1 << 40,
            risk: 0.1 + 0.2,
            bayes_risk: 1.0 / 3.0,
            excess_risk: f64::MIN_POSITIVE,
            wall_time_seconds: None,
        }
    }

    #[test]
    fn csv_round_trips_exactly() {
        let recs = vec![
            rec(),
            TrialRecord {
                tau: None,
                scenario: ShiftKind::LabelShift,
                ..rec()
            },
        ];
        let bytes = records_csv(&recs).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RECORD_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 3);
        assert!(text
            .lines()
            .nth(2)
            .unwrap()
            .starts_with("label_shift,full_binning,8,32,,"));
        assert_eq!(read_records_csv(&bytes[..]).unwrap(), recs);
    }

    #[test]
    fn missing_column_is_named() {
        let text = "scenario,estimator,n_min,n_maj,tau,K_bins,replication_id,seed_used,risk,bayes_risk,wall_time_seconds\n";
        let err = read_records_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("excess_risk"));
    }

    #[test]
    fn bad_row_is_named() {
        let mut bytes = records_csv(&[rec()]).unwrap();
        bytes.extend_from_slice(b"group_shift,full_binning,8,32,,2,0,0,oops,0,0,\n");
        let err = read_records_csv(&bytes[..]).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        write_atomically(dir.path(), &[("a.txt", b"one".to_vec())]).unwrap();
        write_atomically(dir.path(), &[("a.txt", b"two".to_vec())]).unwrap();
        assert_eq!(std::fs::read(dir.path().join("a.txt")).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
