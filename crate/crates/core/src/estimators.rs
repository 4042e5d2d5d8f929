//! Binning classifiers, the histogram plug-in rule and the posterior oracle.
//!
//! Every rule here predicts `+1` only on a strict win and `-1` otherwise:
//! ties, empty bins and `sign(0)` all resolve to `-1`.

use rand::Rng;

use crate::classifier::{bin_index, Label, PiecewiseConstantClassifier};
use crate::density::{bin_center, Hat};
use crate::error::{Error, Result};
use crate::instances::{undersample, Dataset, Group, Sample, ShiftKind};

/// Per-bin label counts over `K` equal bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinCounts {
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

impl BinCounts {
    pub fn tally<'a>(samples: impl IntoIterator<Item = &'a Sample>, k: usize) -> Self {
        let mut pos = vec![0; k];
        let mut neg = vec![0; k];
        for s in samples {
            let j = bin_index(s.x, k);
            match s.y {
                Label::Pos => pos[j] += 1,
                Label::Neg => neg[j] += 1,
            }
        }
        Self { pos, neg }
    }

    pub fn k(&self) -> usize {
        self.pos.len()
    }

    /// `+1` in bin `j` iff `n_{1,j} > n_{-1,j}`.
    pub fn majority_vote(&self) -> PiecewiseConstantClassifier {
        let labels = self
            .pos
            .iter()
            .zip(&self.neg)
            .map(|(&p, &n)| if p > n { Label::Pos } else { Label::Neg })
            .collect();
        PiecewiseConstantClassifier::from_bin_labels(labels).expect("k >= 1")
    }
}

fn check_bins(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "number of bins K must be >= 1".into(),
        ));
    }
    Ok(())
}

fn check_minority(data: &Dataset) -> Result<()> {
    if data.n_min() == 0 {
        return Err(Error::InsufficientData("estimator needs n_min >= 1".into()));
    }
    Ok(())
}

/// Per-bin majority vote over the undersampled dataset.
pub fn fit_undersampled_binning<R: Rng + ?Sized>(
    data: &Dataset,
    k: usize,
    rng: &mut R,
) -> Result<PiecewiseConstantClassifier> {
    check_bins(k)?;
    check_minority(data)?;
    let balanced = undersample(data, rng)?;
    Ok(BinCounts::tally(balanced.samples(), k).majority_vote())
}

/// Per-bin majority vote over all samples, without undersampling.
pub fn fit_full_binning(data: &Dataset, k: usize) -> Result<PiecewiseConstantClassifier> {
    check_bins(k)?;
    if data.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    Ok(BinCounts::tally(data.samples(), k).majority_vote())
}

/// Importance-weighted vote: minority samples count `rho = n_maj / n_min`
/// times, majority samples once.
pub fn fit_weighted_binning(data: &Dataset, k: usize) -> Result<PiecewiseConstantClassifier> {
    check_bins(k)?;
    check_minority(data)?;
    let rho = data.n_maj() as f64 / data.n_min() as f64;
    let mut pos = vec![0.0; k];
    let mut neg = vec![0.0; k];
    for s in data.samples() {
        let w = match s.group {
            Group::Majority => 1.0,
            Group::Minority => rho,
        };
        let j = bin_index(s.x, k);
        match s.y {
            Label::Pos => pos[j] += w,
            Label::Neg => neg[j] += w,
        }
    }
    let labels = pos
        .iter()
        .zip(&neg)
        .map(|(p, n)| if p > n { Label::Pos } else { Label::Neg })
        .collect();
    PiecewiseConstantClassifier::from_bin_labels(labels)
}

/// Histogram estimates of the class conditionals `P_1`, `P_{-1}` on a
/// balanced label-shift sample. Bin values are `(n_{y,j} / n_min) * K`, so
/// each estimate integrates to one.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramDensityPair {
    k: usize,
    p1_hat: Vec<f64>,
    pm1_hat: Vec<f64>,
}

impl HistogramDensityPair {
    pub fn from_counts(counts: &BinCounts, n_min: usize) -> Result<Self> {
        if n_min == 0 {
            return Err(Error::InsufficientData("histogram needs n_min >= 1".into()));
        }
        let k = counts.k();
        let scale = k as f64 / n_min as f64;
        Ok(Self {
            k,
            p1_hat: counts.pos.iter().map(|&c| c as f64 * scale).collect(),
            pm1_hat: counts.neg.iter().map(|&c| c as f64 * scale).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p1_hat(&self) -> &[f64] {
        &self.p1_hat
    }

    pub fn pm1_hat(&self) -> &[f64] {
        &self.pm1_hat
    }

    /// `P̂_1 / (P̂_1 + P̂_{-1})` on bin `j`; undefined on bins with no samples.
    pub fn eta_hat(&self, j: usize) -> Option<f64> {
        let (p, q) = (self.p1_hat[j], self.pm1_hat[j]);
        (p + q > 0.0).then(|| p / (p + q))
    }

    /// `+1` exactly where `eta_hat > 1/2`.
    pub fn classifier(&self) -> PiecewiseConstantClassifier {
        let labels = (0..self.k)
            .map(|j| match self.eta_hat(j) {
                Some(e) if e > 0.5 => Label::Pos,
                _ => Label::Neg,
            })
            .collect();
        PiecewiseConstantClassifier::from_bin_labels(labels).expect("k >= 1")
    }
}

/// Undersamples, builds the histogram pair and thresholds the plug-in
/// `eta_hat` at 1/2.
pub fn fit_histogram_plugin<R: Rng + ?Sized>(
    data: &Dataset,
    k: usize,
    rng: &mut R,
) -> Result<(HistogramDensityPair, PiecewiseConstantClassifier)> {
    if data.kind() != ShiftKind::LabelShift {
        return Err(Error::WrongScenario {
            expected: ShiftKind::LabelShift,
        });
    }
    check_bins(k)?;
    check_minority(data)?;
    let balanced = undersample(data, rng)?;
    let hist = HistogramDensityPair::from_counts(
        &BinCounts::tally(balanced.samples(), k),
        balanced.n_min(),
    )?;
    let clf = hist.classifier();
    Ok((hist, clf))
}

/// Trit values in table order.
const TRITS: [i8; 3] = [-1, 0, 1];

/// Exact posterior over a hard family's index given a sample, stored as one
/// probability table per bin (the posterior factorizes over bins).
///
/// Label shift tables have nine cells, cell `3 * (a + 1) + (b + 1)` holding
/// `P(v_{1,j} = a, v_{-1,j} = b | S)`. Group shift tables have two cells,
/// `P(v_j = -1 | S)` then `P(v_j = +1 | S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyPosterior {
    kind: ShiftKind,
    tables: Vec<Vec<f64>>,
}

impl FamilyPosterior {
    pub fn kind(&self) -> ShiftKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.tables.len()
    }

    pub fn table(&self, j: usize) -> &[f64] {
        &self.tables[j]
    }

    /// Marginal posterior of `v_{1,j}` over `(-1, 0, 1)` (label shift).
    pub fn marginal_v1(&self, j: usize) -> [f64; 3] {
        let t = &self.tables[j];
        [0, 1, 2].map(|a| t[3 * a] + t[3 * a + 1] + t[3 * a + 2])
    }

    /// Marginal posterior of `v_{-1,j}` over `(-1, 0, 1)` (label shift).
    pub fn marginal_vm1(&self, j: usize) -> [f64; 3] {
        let t = &self.tables[j];
        [0, 1, 2].map(|b| t[b] + t[3 + b] + t[6 + b])
    }

    /// Coefficient of `φ(x - c_j)` in the posterior-mixed discriminant:
    /// `E[v_{1,j} - v_{-1,j} | S]` for label shift, `E[v_j | S]` for group
    /// shift.
    pub fn score(&self, j: usize) -> f64 {
        match self.kind {
            ShiftKind::LabelShift => {
                let m1 = self.marginal_v1(j);
                let m2 = self.marginal_vm1(j);
                (m1[2] - m1[0]) - (m2[2] - m2[0])
            }
            ShiftKind::GroupShift => self.tables[j][1] - self.tables[j][0],
        }
    }
}

fn normalize_log(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Per-bin posterior under a uniform prior on the hard family of `kind` with
/// `family_k` bins. Likelihoods are accumulated in log space.
pub fn compute_family_posterior(
    data: &Dataset,
    family_k: usize,
    kind: ShiftKind,
) -> Result<FamilyPosterior> {
    let hat = Hat::new(family_k)?;
    let cells = match kind {
        ShiftKind::LabelShift => 9,
        ShiftKind::GroupShift => 2,
    };
    let mut logs = vec![vec![0.0; cells]; family_k];
    for s in data.samples() {
        let j = bin_index(s.x, family_k);
        let h = hat.eval(s.x - bin_center(j, family_k));
        let table = &mut logs[j];
        match kind {
            ShiftKind::LabelShift => {
                // A majority sample is a draw from P_{v,1}, which only sees
                // v_{1,j}; a minority sample only sees v_{-1,j}.
                for (ai, &a) in TRITS.iter().enumerate() {
                    for (bi, &b) in TRITS.iter().enumerate() {
                        let coeff = match s.group {
                            Group::Majority => a,
                            Group::Minority => b,
                        };
                        table[3 * ai + bi] += (1.0 + f64::from(coeff) * h).ln();
                    }
                }
            }
            ShiftKind::GroupShift => {
                // P(y | x, v) = (1 + y v φ) / 2; the group marginal does not
                // depend on v.
                let y = f64::from(s.y.sign());
                table[0] += (1.0 - y * h).ln();
                table[1] += (1.0 + y * h).ln();
            }
        }
    }
    Ok(FamilyPosterior {
        kind,
        tables: logs.iter().map(|l| normalize_log(l)).collect(),
    })
}

/// Pointwise minimizer of the posterior-mixture risk.
///
/// In bin `j` the mixture's discriminant is `score_j * φ(x - c_j)`, so the
/// prediction is `sign(score_j)` on the right half-bin and its negation on the
/// left half-bin (`-1` on both when `score_j = 0`).
pub fn posterior_oracle_classifier(post: &FamilyPosterior) -> PiecewiseConstantClassifier {
    let k = post.k();
    let mut labels = Vec::with_capacity(2 * k);
    for j in 0..k {
        let d = post.score(j);
        labels.push(Label::from_strict_positive(-d));
        labels.push(Label::from_strict_positive(d));
    }
    let breakpoints = (0..=2 * k).map(|i| i as f64 / (2 * k) as f64).collect();
    PiecewiseConstantClassifier::new(breakpoints, labels).expect("half-bin grid is valid")
}
