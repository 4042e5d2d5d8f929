use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary label in `{-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn sign(self) -> i8 {
        match self {
            Label::Neg => -1,
            Label::Pos => 1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Neg => Label::Pos,
            Label::Pos => Label::Neg,
        }
    }

    /// `+1` for strictly positive input, `-1` otherwise (so `sign(0) = -1`).
    pub fn from_strict_positive(v: f64) -> Self {
        if v > 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }
}

/// Index of the half-open bin `[j/K, (j+1)/K)` containing `x`; `x = 1` goes
/// to the last bin.
pub fn bin_index(x: f64, k: usize) -> usize {
    let j = (x * k as f64).floor();
    if j <= 0.0 {
        0
    } else {
        (j as usize).min(k - 1)
    }
}

/// A labelling of `[0, 1]` that is constant on finitely many cells.
///
/// Cells are half-open `[b_i, b_{i+1})`, except the last which includes 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantClassifier {
    breakpoints: Vec<f64>,
    labels: Vec<Label>,
}

impl PiecewiseConstantClassifier {
    pub fn new(breakpoints: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        if breakpoints.len() < 2 || labels.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidInput(format!(
                "classifier needs one label per cell: {} breakpoints, {} labels",
                breakpoints.len(),
                labels.len()
            )));
        }
        if breakpoints[0] != 0.0 || breakpoints[breakpoints.len() - 1] != 1.0 {
            return Err(Error::InvalidInput(
                "classifier must cover exactly [0, 1]".into(),
            ));
        }
        if breakpoints
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::InvalidInput(
                "classifier breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            labels,
        })
    }

    pub fn constant(label: Label) -> Self {
        Self {
            breakpoints: vec![0.0, 1.0],
            labels: vec![label],
        }
    }

    /// One label per equal-width bin.
    pub fn from_bin_labels(labels: Vec<Label>) -> Result<Self> {
        let k = labels.len();
        if k == 0 {
            return Err(Error::InvalidParameter("need at least one bin".into()));
        }
        let breakpoints = (0..=k).map(|j| j as f64 / k as f64).collect();
        Self::new(breakpoints, labels)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// `(lo, hi, label)` for every cell.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, Label)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.labels)
            .map(|(w, &l)| (w[0], w[1], l))
    }

    pub fn predict(&self, x: f64) -> Label {
        let i = self.breakpoints.partition_point(|&b| b <= x);
        self.labels[i.saturating_sub(1).min(self.labels.len() - 1)]
    }

    pub fn flipped(&self) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            labels: self.labels.iter().map(|l| l.flip()).collect(),
        }
    }

    /// Merges adjacent cells that carry the same label.
    pub fn simplified(&self) -> Self {
        let mut breakpoints = vec![0.0];
        let mut labels: Vec<Label> = Vec::new();
        for (_, hi, l) in self.cells() {
            if labels.last() == Some(&l) {
                *breakpoints.last_mut().unwrap() = hi;
            } else {
                labels.push(l);
                breakpoints.push(hi);
            }
        }
        Self {
            breakpoints,
            labels,
        }
    }

    /// Pointwise equality as functions on `[0, 1]`, ignoring how cells are
    /// split.
    pub fn same_function(&self, other: &Self) -> bool {
        self.simplified() == other.simplified()
    }
}
