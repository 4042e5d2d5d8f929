use std::path::Path;

use anyhow::{Context, Result};
use shiftbin_core::harness::{Arm, BinRule, EstimatorKind, IndexMode, SweepConfig};
use shiftbin_core::{Error, ExperimentConfig, ShiftKind};
use toml::{Table, Value};

const KNOWN_KEYS: &[&str] = &[
    "scenario",
    "family_k",
    "tau",
    "n_min_grid",
    "rho",
    "n_maj_grid",
    "estimators",
    "replications",
    "bin_rule",
    "seed",
    "index_mode",
    "record_timing",
    "sweep",
];

/// Reads typed fields out of a TOML table, collecting every problem instead
/// of stopping at the first.
struct Reader<'a> {
    table: &'a Table,
    prefix: &'static str,
    errs: Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(table: &'a Table, prefix: &'static str) -> Self {
        Self {
            table,
            prefix,
            errs: Vec::new(),
        }
    }

    fn name(&self, key: &str) -> String {
        format!("{}{key}", self.prefix)
    }

    fn get(&mut self, key: &str, required: bool) -> Option<&'a Value> {
        let v = self.table.get(key);
        if v.is_none() && required {
            let name = self.name(key);
            self.errs.push(format!("missing required key `{name}`"));
        }
        v
    }

    fn bad(&mut self, key: &str, what: &str) {
        let name = self.name(key);
        self.errs.push(format!("`{name}` must be {what}"));
    }

    fn count(&mut self, key: &str, required: bool) -> Option<usize> {
        match self.get(key, required)? {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            _ => {
                self.bad(key, "a nonnegative integer");
                None
            }
        }
    }

    fn real(&mut self, key: &str) -> Option<f64> {
        match self.get(key, false)? {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.bad(key, "a number");
                None
            }
        }
    }

    fn boolean(&mut self, key: &str) -> Option<bool> {
        match self.get(key, false)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.bad(key, "true or false");
                None
            }
        }
    }

    fn string(&mut self, key: &str, required: bool) -> Option<&'a str> {
        match self.get(key, required)? {
            Value::String(s) => Some(s),
            _ => {
                self.bad(key, "a string");
                None
            }
        }
    }

    fn counts(&mut self, key: &str, required: bool) -> Option<Vec<usize>> {
        let arr = match self.get(key, required)? {
            Value::Array(a) => a,
            _ => {
                self.bad(key, "an array of nonnegative integers");
                return None;
            }
        };
        let out: Option<Vec<usize>> = arr
            .iter()
            .map(|v| match v {
                Value::Integer(i) if *i >= 0 => Some(*i as usize),
                _ => None,
            })
            .collect();
        if out.is_none() {
            self.bad(key, "an array of nonnegative integers");
        }
        out
    }

    fn strings(&mut self, key: &str) -> Option<Vec<&'a str>> {
        let arr = match self.get(key, false)? {
            Value::Array(a) => a,
            _ => {
                self.bad(key, "an array of strings");
                return None;
            }
        };
        let out: Option<Vec<&str>> = arr.iter().map(|v| v.as_str()).collect();
        if out.is_none() {
            self.bad(key, "an array of strings");
        }
        out
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, raw: &str, what: &str) -> Option<T> {
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                let name = self.name(key);
                self.errs
                    .push(format!("`{name}`: unknown value `{raw}` (expected {what})"));
                None
            }
        }
    }
}

fn seed_value(r: &mut Reader<'_>) -> Option<u64> {
    match r.get("seed", true)? {
        Value::Integer(i) if *i >= 0 => Some(*i as u64),
        Value::String(s) => match s.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                r.bad("seed", "a 64-bit unsigned integer");
                None
            }
        },
        _ => {
            r.bad(
                "seed",
                "a nonnegative integer (or a string for values above 2^63)",
            );
            None
        }
    }
}

fn bin_rule(r: &mut Reader<'_>) -> Option<BinRule> {
    let table = match r.get("bin_rule", false)? {
        Value::Table(t) => t,
        _ => {
            r.bad("bin_rule", "a table");
            return None;
        }
    };
    let mut sub = Reader::new(table, "bin_rule.");
    let rule = match sub.string("kind", true) {
        Some("cube_root") => Some(BinRule::CubeRoot {
            multiplier: sub.real("multiplier").unwrap_or(1.0),
        }),
        Some("fixed") => sub.count("k", true).map(|k| BinRule::Fixed { k }),
        Some(other) => {
            sub.errs.push(format!(
                "`bin_rule.kind`: unknown value `{other}` (expected cube_root or fixed)"
            ));
            None
        }
        None => None,
    };
    r.errs.append(&mut sub.errs);
    rule
}

fn sweep(r: &mut Reader<'_>) -> Option<SweepConfig> {
    let table = match r.get("sweep", false)? {
        Value::Table(t) => t,
        _ => {
            r.bad("sweep", "a table");
            return None;
        }
    };
    let mut sub = Reader::new(table, "sweep.");
    let base_n_min = sub.count("base_n_min", true);
    let base_n_maj = sub.count("base_n_maj", true);
    let additions = sub.counts("additions", true);
    let arms = match sub.strings("arms") {
        Some(names) => names
            .iter()
            .map(|n| sub.parsed::<Arm>("arms", n, "add_minority, add_majority or add_both"))
            .collect(),
        None => Some(vec![Arm::AddMinority, Arm::AddMajority, Arm::AddBoth]),
    };
    r.errs.append(&mut sub.errs);
    Some(SweepConfig {
        base_n_min: base_n_min?,
        base_n_maj: base_n_maj?,
        additions: additions?,
        arms: arms?,
    })
}

/// Parses and validates a TOML experiment config, filling defaults.
/// Every violation is reported in a single error.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let table: Table = text.parse().context("config is not valid TOML")?;
    let mut r = Reader::new(&table, "");
    for key in table.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            r.errs.push(format!("unknown key `{key}`"));
        }
    }
    let scenario = r
        .string("scenario", true)
        .and_then(|s| r.parsed::<ShiftKind>("scenario", s, "label_shift or group_shift"));
    let family_k = r.count("family_k", true);
    let n_min_grid = r.counts("n_min_grid", true);
    let seed = seed_value(&mut r);
    let tau = r.real("tau");
    let rho = r.real("rho");
    let n_maj_grid = r.counts("n_maj_grid", false);
    let estimators: Option<Vec<EstimatorKind>> = match r.strings("estimators") {
        Some(names) => names
            .iter()
            .map(|n| {
                r.parsed(
                    "estimators",
                    n,
                    "undersampled_binning, full_binning, weighted_binning, histogram_plugin or posterior_oracle",
                )
            })
            .collect(),
        None => Some(vec![EstimatorKind::UndersampledBinning]),
    };
    let replications = r.count("replications", false);
    let index_mode = match r.string("index_mode", false) {
        Some("fresh") | None => Some(IndexMode::Fresh),
        Some("fixed") => Some(IndexMode::Fixed),
        Some(other) => {
            r.errs.push(format!(
                "`index_mode`: unknown value `{other}` (expected fresh or fixed)"
            ));
            None
        }
    };
    let bin_rule = bin_rule(&mut r);
    let record_timing = r.boolean("record_timing");
    let sweep = sweep(&mut r);

    let mut errs = std::mem::take(&mut r.errs);
    let assembled = (|| {
        let mut cfg = ExperimentConfig::new(scenario?, family_k?, n_min_grid?, seed?);
        cfg.tau = tau;
        cfg.rho = rho.unwrap_or(cfg.rho);
        cfg.n_maj_grid = n_maj_grid;
        cfg.estimators = estimators?;
        cfg.replications = replications.unwrap_or(cfg.replications);
        cfg.index_mode = index_mode?;
        cfg.bin_rule = bin_rule.unwrap_or_default();
        cfg.record_timing = record_timing.unwrap_or(false);
        cfg.sweep = sweep;
        Some(cfg)
    })();
    if let Some(cfg) = &assembled {
        if let Err(Error::Config(mut more)) = cfg.validate() {
            errs.append(&mut more);
        }
    }
    match assembled {
        Some(cfg) if errs.is_empty() => Ok(cfg),
        _ => Err(Error::Config(errs).into()),
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_config_str(&text).with_context(|| format!("in config {}", path.display()))
}
