use serde::{Deserialize, Serialize};

use super::{EstimatorKind, TrialRecord};
use crate::error::{Error, Result};
use crate::instances::ShiftKind;

/// Sample mean and its standard error (sample standard deviation over
/// `sqrt(n)`; zero for a single value).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-cell aggregate over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario: ShiftKind,
    pub estimator: EstimatorKind,
    pub n_min: usize,
    pub n_maj: usize,
    pub tau: Option<f64>,
    pub k_bins: usize,
    pub replications: usize,
    pub mean_risk: f64,
    pub mean_bayes_risk: f64,
    pub mean_excess_risk: f64,
    pub se_excess_risk: f64,
}

type CellKey = (ShiftKind, EstimatorKind, usize, usize, Option<u64>, usize);

fn key(r: &TrialRecord) -> CellKey {
    (
        r.scenario,
        r.estimator,
        r.n_min,
        r.n_maj,
        r.tau.map(f64::to_bits),
        r.k_bins,
    )
}

/// Groups records into cells in order of first appearance.
pub fn summarize(records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<CellKey> = Vec::new();
    let mut groups: Vec<Vec<&TrialRecord>> = Vec::new();
    for r in records {
        let k = key(r);
        match keys.iter().position(|x| *x == k) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(k);
                groups.push(vec![r]);
            }
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let first = g[0];
            let n = g.len() as f64;
            let excess: Vec<f64> = g.iter().map(|r| r.excess_risk).collect();
            let (mean_excess_risk, se_excess_risk) = mean_and_se(&excess);
            CellSummary {
                scenario: first.scenario,
                estimator: first.estimator,
                n_min: first.n_min,
                n_maj: first.n_maj,
                tau: first.tau,
                k_bins: first.k_bins,
                replications: g.len(),
                mean_risk: g.iter().map(|r| r.risk).sum::<f64>() / n,
                mean_bayes_risk: g.iter().map(|r| r.bayes_risk).sum::<f64>() / n,
                mean_excess_risk,
                se_excess_risk,
            }
        })
        .collect()
}

/// Least-squares line through `(log n, log value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Fits `value ~ exp(intercept) * n^slope` by OLS in log-log space.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::RateUndefined(format!(
            "need at least 3 distinct n values, got {}",
            xs.len()
        )));
    }
    if let Some(&(n, v)) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(Error::RateUndefined(format!(
            "nonpositive point (n = {n}, value = {v}) has no logarithm"
        )));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r_squared: r_squared.clamp(0.0, 1.0),
        n_points: points.len(),
    })
}

/// Fits the log-log slope of mean excess risk against `n_min`, averaging all
/// given records that share an `n_min`. Callers choose the group (one
/// estimator, one scenario) by filtering first.
pub fn fit_rate(records: &[TrialRecord]) -> Result<RateFit> {
    let mut grid: Vec<usize> = records.iter().map(|r| r.n_min).collect();
    grid.sort_unstable();
    grid.dedup();
    let points = grid
        .iter()
        .map(|&n| {
            let v: Vec<f64> = records
                .iter()
                .filter(|r| r.n_min == n)
                .map(|r| r.excess_risk)
                .collect();
            let (mean, _) = mean_and_se(&v);
            if mean > 0.0 {
                Ok((n as f64, mean))
            } else {
                Err(Error::RateUndefined(format!(
                    "mean excess risk at n_min = {n} is {mean}, not positive"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    fit_power_law(&points)
}
