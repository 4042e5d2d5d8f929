//! Seeded, parallel Monte Carlo runner over hard-family instances.
//!
//! Every cell owns a `ChaCha8Rng` seeded with the config seed and switched to
//! a stream derived from the cell coordinates, so results do not depend on
//! scheduling or worker count.

mod stats;
mod verify;

pub use stats::{fit_power_law, fit_rate, mean_and_se, summarize, CellSummary, RateFit};
pub use verify::{verify_lemmas, verify_lemmas_with_tolerance, LemmaCheck, VerificationReport};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::PiecewiseConstantClassifier;
use crate::error::{Error, Result};
use crate::estimators::{
    compute_family_posterior, fit_full_binning, fit_histogram_plugin, fit_undersampled_binning,
    fit_weighted_binning, posterior_oracle_classifier,
};
use crate::instances::{
    draw_dataset, random_index, Dataset, FamilyIndex, ShiftInstance, ShiftKind,
};
use crate::risk::excess_risk;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    UndersampledBinning,
    FullBinning,
    WeightedBinning,
    HistogramPlugin,
    PosteriorOracle,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::UndersampledBinning,
        EstimatorKind::FullBinning,
        EstimatorKind::WeightedBinning,
        EstimatorKind::HistogramPlugin,
        EstimatorKind::PosteriorOracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::UndersampledBinning => "undersampled_binning",
            EstimatorKind::FullBinning => "full_binning",
            EstimatorKind::WeightedBinning => "weighted_binning",
            EstimatorKind::HistogramPlugin => "histogram_plugin",
            EstimatorKind::PosteriorOracle => "posterior_oracle",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator `{s}`")))
    }
}

/// How many bins the binning estimators use at a given `n_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinRule {
    /// `ceil(c * ceil(n_min^{1/3}))`.
    CubeRoot {
        multiplier: f64,
    },
    Fixed {
        k: usize,
    },
}

impl Default for BinRule {
    fn default() -> Self {
        BinRule::CubeRoot { multiplier: 1.0 }
    }
}

/// Smallest `k` with `k^3 >= n`.
pub fn ceil_cbrt(n: usize) -> usize {
    let mut k = (n as f64).cbrt().round() as usize;
    while k.pow(3) < n {
        k += 1;
    }
    while k > 0 && (k - 1).pow(3) >= n {
        k -= 1;
    }
    k
}

impl BinRule {
    pub fn bins(&self, n_min: usize) -> usize {
        match *self {
            BinRule::CubeRoot { multiplier } => {
                ((multiplier * ceil_cbrt(n_min) as f64).ceil() as usize).max(1)
            }
            BinRule::Fixed { k } => k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    /// A new hard-family index per replication.
    #[default]
    Fresh,
    /// One index, drawn once from the seed, shared by every cell.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    AddMinority,
    AddMajority,
    AddBoth,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::AddMinority => "add_minority",
            Arm::AddMajority => "add_majority",
            Arm::AddBoth => "add_both",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Arm::AddMinority, Arm::AddMajority, Arm::AddBoth]
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown sweep arm `{s}`")))
    }
}

/// Minority/majority addition schedule. Step `i` adds `additions[i]` samples
/// to the minority, to the majority, or to the minority together with
/// `rho * additions[i]` to the majority (`rho` the base ratio). The majority
/// never drops below the minority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base_n_min: usize,
    pub base_n_maj: usize,
    pub additions: Vec<usize>,
    pub arms: Vec<Arm>,
}

impl SweepConfig {
    /// `(n_min, n_maj)` for `arm` after adding `extra` samples.
    pub fn sizes(&self, arm: Arm, extra: usize) -> (usize, usize) {
        let (m, n) = (self.base_n_min, self.base_n_maj);
        let (m, n) = match arm {
            Arm::AddMinority => (m + extra, n),
            Arm::AddMajority => (m, n + extra),
            Arm::AddBoth => (
                m + extra,
                n + (extra as f64 * n as f64 / m as f64).round() as usize,
            ),
        };
        (m, n.max(m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ShiftKind,
    pub family_k: usize,
    pub tau: Option<f64>,
    pub n_min_grid: Vec<usize>,
    pub rho: f64,
    pub n_maj_grid: Option<Vec<usize>>,
    pub estimators: Vec<EstimatorKind>,
    pub replications: usize,
    pub bin_rule: BinRule,
    pub seed: u64,
    pub index_mode: IndexMode,
    pub record_timing: bool,
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(scenario: ShiftKind, family_k: usize, n_min_grid: Vec<usize>, seed: u64) -> Self {
        Self {
            scenario,
            family_k,
            tau: None,
            n_min_grid,
            rho: 4.0,
            n_maj_grid: None,
            estimators: vec![EstimatorKind::UndersampledBinning],
            replications: 100,
            bin_rule: BinRule::default(),
            seed,
            index_mode: IndexMode::Fresh,
            record_timing: false,
            sweep: None,
        }
    }

    /// Checks every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.family_k == 0 {
            errs.push("family_k must be >= 1".to_string());
        }
        match (self.scenario, self.tau) {
            (ShiftKind::LabelShift, Some(_)) => {
                errs.push("tau is only valid for group_shift".into())
            }
            (ShiftKind::GroupShift, None) => errs.push("group_shift requires tau".into()),
            (ShiftKind::GroupShift, Some(t)) if !(0.0..=1.0).contains(&t) => {
                errs.push(format!("tau must lie in [0, 1], got {t}"))
            }
            _ => {}
        }
        if self.n_min_grid.is_empty() {
            errs.push("n_min_grid must be nonempty".into());
        }
        if self.n_min_grid.len() >= 1 << 20 {
            errs.push("n_min_grid has too many points".into());
        }
        if self.n_min_grid.contains(&0) {
            errs.push("n_min_grid entries must be >= 1".into());
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            errs.push(format!("rho must be positive, got {}", self.rho));
        }
        if let Some(g) = &self.n_maj_grid {
            if g.len() != self.n_min_grid.len() {
                errs.push(format!(
                    "n_maj_grid has {} entries but n_min_grid has {}",
                    g.len(),
                    self.n_min_grid.len()
                ));
            } else if let Some((m, n)) = self.n_min_grid.iter().zip(g).find(|(m, n)| n < m) {
                errs.push(format!("n_maj_grid entry {n} is below its n_min {m}"));
            }
        }
        if self.estimators.is_empty() {
            errs.push("estimators must be nonempty".into());
        }
        if self.scenario == ShiftKind::GroupShift
            && self.estimators.contains(&EstimatorKind::HistogramPlugin)
        {
            errs.push("histogram_plugin applies to label_shift only".into());
        }
        if self.replications == 0 {
            errs.push("replications must be >= 1".into());
        }
        if self.replications > u32::MAX as usize {
            errs.push("replications must fit in 32 bits".into());
        }
        match self.bin_rule {
            BinRule::CubeRoot { multiplier } if !(multiplier.is_finite() && multiplier > 0.0) => {
                errs.push(format!(
                    "bin_rule multiplier must be positive, got {multiplier}"
                ))
            }
            BinRule::Fixed { k: 0 } => errs.push("bin_rule k must be >= 1".into()),
            _ => {}
        }
        if let Some(s) = &self.sweep {
            if s.base_n_min == 0 {
                errs.push("sweep.base_n_min must be >= 1".into());
            }
            if s.base_n_maj < s.base_n_min {
                errs.push("sweep.base_n_maj must be >= sweep.base_n_min".into());
            }
            if s.additions.is_empty() {
                errs.push("sweep.additions must be nonempty".into());
            }
            if s.arms.is_empty() {
                errs.push("sweep.arms must be nonempty".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// `(n_min, n_maj)` per grid point; `n_maj = max(round(rho * n_min), n_min)`
    /// unless an explicit grid is given.
    pub fn sizes(&self) -> Vec<(usize, usize)> {
        match &self.n_maj_grid {
            Some(g) => self
                .n_min_grid
                .iter()
                .copied()
                .zip(g.iter().copied())
                .collect(),
            None => self
                .n_min_grid
                .iter()
                .map(|&m| (m, ((self.rho * m as f64).round() as usize).max(m)))
                .collect(),
        }
    }

    fn bins_for(&self, estimator: EstimatorKind, n_min: usize) -> usize {
        match estimator {
            EstimatorKind::PosteriorOracle => self.family_k,
            _ => self.bin_rule.bins(n_min),
        }
    }
}

/// One `(cell, replication)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario: ShiftKind,
    pub estimator: EstimatorKind,
    pub n_min: usize,
    pub n_maj: usize,
    pub tau: Option<f64>,
    pub k_bins: usize,
    pub replication_id: u32,
    /// Stream id of the cell's generator under the config seed.
    pub seed_used: u64,
    pub risk: f64,
    pub bayes_risk: f64,
    pub excess_risk: f64,
    pub wall_time_seconds: Option<f64>,
}

/// A record tagged with its sweep arm and step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub arm: Arm,
    pub step: usize,
    pub record: TrialRecord,
}

/// Packs cell coordinates into a stream id: block (4 bits), grid point
/// (20 bits), estimator (8 bits), replication (32 bits).
pub fn cell_stream(block: u64, point: usize, estimator: usize, replication: u32) -> u64 {
    debug_assert!(block < 16 && point < (1 << 20) && estimator < 256);
    (block << 60) | ((point as u64) << 40) | ((estimator as u64) << 32) | u64::from(replication)
}

const FIXED_INDEX_STREAM: u64 = u64::MAX;

pub fn fit_estimator(
    estimator: EstimatorKind,
    data: &Dataset,
    k_bins: usize,
    family_k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PiecewiseConstantClassifier> {
    match estimator {
        EstimatorKind::UndersampledBinning => fit_undersampled_binning(data, k_bins, rng),
        EstimatorKind::FullBinning => fit_full_binning(data, k_bins),
        EstimatorKind::WeightedBinning => fit_weighted_binning(data, k_bins),
        EstimatorKind::HistogramPlugin => fit_histogram_plugin(data, k_bins, rng).map(|(_, c)| c),
        EstimatorKind::PosteriorOracle => {
            let post = compute_family_posterior(data, family_k, data.kind())?;
            Ok(posterior_oracle_classifier(&post))
        }
    }
}

struct Cell {
    stream: u64,
    estimator: EstimatorKind,
    n_min: usize,
    n_maj: usize,
    replication: u32,
}

fn fixed_instance(cfg: &ExperimentConfig) -> Result<Option<ShiftInstance>> {
    if cfg.index_mode != IndexMode::Fixed {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(FIXED_INDEX_STREAM);
    let idx: FamilyIndex = random_index(cfg.scenario, cfg.family_k, cfg.tau, &mut rng)?;
    Ok(Some(idx.instance()))
}

fn run_cell(
    cfg: &ExperimentConfig,
    fixed: Option<&ShiftInstance>,
    cell: &Cell,
) -> Result<TrialRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cell.stream);
    let fresh;
    let instance = match fixed {
        Some(inst) => inst,
        None => {
            fresh = random_index(cfg.scenario, cfg.family_k, cfg.tau, &mut rng)?.instance();
            &fresh
        }
    };
    let data = draw_dataset(instance, cell.n_maj, cell.n_min, &mut rng)?;
    let k_bins = cfg.bins_for(cell.estimator, cell.n_min);
    let start = Instant::now();
    let clf = fit_estimator(cell.estimator, &data, k_bins, cfg.family_k, &mut rng)?;
    let report = excess_risk(&clf, instance)?;
    let elapsed = start.elapsed().as_secs_f64();
    Ok(TrialRecord {
        scenario: cfg.scenario,
        estimator: cell.estimator,
        n_min: cell.n_min,
        n_maj: cell.n_maj,
        tau: cfg.tau,
        k_bins,
        replication_id: cell.replication,
        seed_used: cell.stream,
        risk: report.risk,
        bayes_risk: report.bayes_risk,
        excess_risk: report.excess_risk,
        wall_time_seconds: cfg.record_timing.then_some(elapsed),
    })
}

fn cells_for(cfg: &ExperimentConfig, block: u64, sizes: &[(usize, usize)]) -> Vec<Cell> {
    let mut cells = Vec::with_capacity(sizes.len() * cfg.estimators.len() * cfg.replications);
    for (p, &(n_min, n_maj)) in sizes.iter().enumerate() {
        for (e, &estimator) in cfg.estimators.iter().enumerate() {
            for r in 0..cfg.replications as u32 {
                cells.push(Cell {
                    stream: cell_stream(block, p, e, r),
                    estimator,
                    n_min,
                    n_maj,
                    replication: r,
                });
            }
        }
    }
    cells
}

fn run_cells(cfg: &ExperimentConfig, cells: &[Cell]) -> Result<Vec<TrialRecord>> {
    let fixed = fixed_instance(cfg)?;
    cells
        .par_iter()
        .map(|c| run_cell(cfg, fixed.as_ref(), c))
        .collect()
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Internal(format!("thread pool: {e}"))),
    }
}

/// Runs every `(grid point, estimator, replication)` cell. Records come back
/// ordered by those coordinates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    run_experiment_with_threads(cfg, None)
}

/// As [`run_experiment`], on a dedicated pool of `threads` workers
/// (`None` uses the global pool).
pub fn run_experiment_with_threads(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let cells = cells_for(cfg, 0, &cfg.sizes());
    in_pool(threads, || run_cells(cfg, &cells))?
}

/// Runs the addition schedule in `cfg.sweep` for each arm, ordered by
/// `(arm, step, estimator, replication)`.
pub fn minority_majority_sweep(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["sweep section is required".into()]))?;
    let mut tags = Vec::new();
    let mut cells = Vec::new();
    for (a, &arm) in sweep.arms.iter().enumerate() {
        let sizes: Vec<_> = sweep
            .additions
            .iter()
            .map(|&x| sweep.sizes(arm, x))
            .collect();
        let block_cells = cells_for(cfg, 1 + a as u64, &sizes);
        let per_step = cfg.estimators.len() * cfg.replications;
        tags.extend((0..block_cells.len()).map(|i| (arm, i / per_step)));
        cells.extend(block_cells);
    }
    let records = in_pool(threads, || run_cells(cfg, &cells))??;
    Ok(tags
        .into_iter()
        .zip(records)
        .map(|((arm, step), record)| SweepRecord { arm, step, record })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ShiftKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(kind, 2, vec![8, 16, 32], 7);
        if kind == ShiftKind::GroupShift {
            cfg.tau = Some(0.5);
        }
        cfg.estimators = vec![
            EstimatorKind::UndersampledBinning,
            EstimatorKind::FullBinning,
        ];
        cfg.replications = 10;
        cfg
    }

    #[test]
    fn ceil_cbrt_values() {
        let got: Vec<_> = [1, 2, 8, 9, 27, 28, 128, 1000, 8192]
            .iter()
            .map(|&n| ceil_cbrt(n))
            .collect();
        assert_eq!(got, vec![1, 2, 2, 3, 3, 4, 6, 10, 21]);
    }

    #[test]
    fn bin_rule_multiplier() {
        assert_eq!(BinRule::CubeRoot { multiplier: 1.0 }.bins(512), 8);
        assert_eq!(BinRule::CubeRoot { multiplier: 0.5 }.bins(512), 4);
        assert_eq!(BinRule::CubeRoot { multiplier: 0.01 }.bins(1), 1);
        assert_eq!(BinRule::Fixed { k: 3 }.bins(512), 3);
    }

    #[test]
    fn cell_count_and_order() {
        let recs = run_experiment(&small(ShiftKind::LabelShift)).unwrap();
        assert_eq!(recs.len(), 60);
        let coords: Vec<_> = recs.iter().map(|r| r.seed_used).collect();
        let mut sorted = coords.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(coords, sorted);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        for kind in [ShiftKind::LabelShift, ShiftKind::GroupShift] {
            let cfg = small(kind);
            let a = run_experiment_with_threads(&cfg, Some(1)).unwrap();
            let b = run_experiment_with_threads(&cfg, Some(4)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn records_are_consistent() {
        let mut cfg = small(ShiftKind::GroupShift);
        cfg.estimators.push(EstimatorKind::PosteriorOracle);
        cfg.index_mode = IndexMode::Fixed;
        for r in run_experiment(&cfg).unwrap() {
            assert!(0.0 <= r.bayes_risk && r.bayes_risk <= r.risk && r.risk <= 1.0);
            assert!((r.excess_risk - (r.risk - r.bayes_risk)).abs() < 1e-12);
            assert_eq!(r.n_maj, 4 * r.n_min);
            assert!(r.wall_time_seconds.is_none());
        }
    }

    #[test]
    fn validate_aggregates() {
        let mut cfg = small(ShiftKind::LabelShift);
        cfg.tau = Some(0.5);
        cfg.replications = 0;
        cfg.n_min_grid.clear();
        match cfg.validate() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
        let mut cfg = small(ShiftKind::GroupShift);
        cfg.estimators = vec![EstimatorKind::HistogramPlugin];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sweep_sizes() {
        let s = SweepConfig {
            base_n_min: 256,
            base_n_maj: 256,
            additions: vec![0, 768],
            arms: vec![Arm::AddMinority, Arm::AddMajority, Arm::AddBoth],
        };
        assert_eq!(s.sizes(Arm::AddMinority, 768), (1024, 1024));
        assert_eq!(s.sizes(Arm::AddMajority, 768), (256, 1024));
        assert_eq!(s.sizes(Arm::AddBoth, 768), (1024, 1024));
        let s = SweepConfig {
            base_n_maj: 1024,
            ..s
        };
        assert_eq!(s.sizes(Arm::AddBoth, 768), (1024, 4096));
        let mut cfg = small(ShiftKind::LabelShift);
        cfg.replications = 3;
        cfg.sweep = Some(s);
        let recs = minority_majority_sweep(&cfg, Some(2)).unwrap();
        assert_eq!(recs.len(), 3 * 2 * 2 * 3);
        assert_eq!(recs[6].step, 1);
        assert_eq!(recs[6].record.n_min, 1024);
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in EstimatorKind::ALL {
            assert_eq!(e.as_str().parse::<EstimatorKind>().unwrap(), e);
        }
        assert!("bogus".parse::<EstimatorKind>().is_err());
    }
}
