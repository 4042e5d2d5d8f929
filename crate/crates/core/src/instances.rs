//! Shift instances, the hard families, dataset draws and undersampling.

use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::Label;
use crate::density::{hat_perturbation, Density, PiecewiseLinearFn};
use crate::error::{Error, Result};

/// Slack allowed on the Lipschitz constant of validated instances.
pub const LIPSCHITZ_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    LabelShift,
    GroupShift,
}

impl ShiftKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ShiftKind::LabelShift => "label_shift",
            ShiftKind::GroupShift => "group_shift",
        }
    }
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "label_shift" => Ok(ShiftKind::LabelShift),
            "group_shift" => Ok(ShiftKind::GroupShift),
            other => Err(Error::InvalidParameter(format!(
                "unknown scenario `{other}`"
            ))),
        }
    }
}

fn check_trits(name: &str, v: &[i8], allowed: &[i8]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{name} must have length K >= 1"
        )));
    }
    if let Some(bad) = v.iter().find(|t| !allowed.contains(t)) {
        return Err(Error::InvalidParameter(format!(
            "{name} entry {bad} not in {allowed:?}"
        )));
    }
    Ok(())
}

/// Index `(v_1, v_{-1}) ∈ {-1, 0, 1}^K × {-1, 0, 1}^K` of the hard label-shift
/// family.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelShiftIndex {
    v1: Vec<i8>,
    vm1: Vec<i8>,
}

impl LabelShiftIndex {
    pub fn new(v1: Vec<i8>, vm1: Vec<i8>) -> Result<Self> {
        check_trits("v1", &v1, &[-1, 0, 1])?;
        check_trits("vm1", &vm1, &[-1, 0, 1])?;
        if v1.len() != vm1.len() {
            return Err(Error::InvalidParameter(format!(
                "v1 has length {} but vm1 has length {}",
                v1.len(),
                vm1.len()
            )));
        }
        Ok(Self { v1, vm1 })
    }

    pub fn k(&self) -> usize {
        self.v1.len()
    }

    pub fn v1(&self) -> &[i8] {
        &self.v1
    }

    pub fn vm1(&self) -> &[i8] {
        &self.vm1
    }
}

/// Index `v ∈ {-1, 1}^K` of the hard group-shift family, together with the
/// overlap level `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShiftIndex {
    v: Vec<i8>,
    tau: f64,
}

impl GroupShiftIndex {
    pub fn new(v: Vec<i8>, tau: f64) -> Result<Self> {
        check_trits("v", &v, &[-1, 1])?;
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidParameter(format!(
                "tau = {tau} outside [0, 1]"
            )));
        }
        Ok(Self { v, tau })
    }

    pub fn k(&self) -> usize {
        self.v.len()
    }

    pub fn v(&self) -> &[i8] {
        &self.v
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyIndex {
    Label(LabelShiftIndex),
    Group(GroupShiftIndex),
}

impl FamilyIndex {
    pub fn instance(&self) -> ShiftInstance {
        match self {
            FamilyIndex::Label(i) => make_label_shift_hard(i),
            FamilyIndex::Group(i) => make_group_shift_hard(i),
        }
    }
}

/// A pair `(P_maj, P_min)` evaluated under the uniform test mixture.
///
/// For label shift `p_maj` / `p_min` are the class conditionals `P_1` /
/// `P_{-1}` (the majority always carries label `+1`). For group shift they are
/// the group marginals `P_a` / `P_b`, and `eta = P(y = 1 | x)` is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftInstance {
    kind: ShiftKind,
    p_maj: Density,
    p_min: Density,
    eta: Option<PiecewiseLinearFn>,
    test_marginal: Density,
}

impl ShiftInstance {
    /// Label-shift instance from class conditionals; both must be 1-Lipschitz.
    pub fn label_shift(p1: Density, pm1: Density) -> Result<Self> {
        for (name, d) in [("P_1", &p1), ("P_-1", &pm1)] {
            let lip = d.shape().lipschitz_constant();
            if !lip.is_within(1.0 + LIPSCHITZ_SLACK) {
                return Err(Error::InvalidInput(format!(
                    "{name} has Lipschitz constant {} > 1",
                    lip.constant
                )));
            }
        }
        let test_marginal = Density::mixture(&p1, &pm1, 0.5)?;
        Ok(Self {
            kind: ShiftKind::LabelShift,
            p_maj: p1,
            p_min: pm1,
            eta: None,
            test_marginal,
        })
    }

    /// Group-shift instance from group marginals and the shared conditional
    /// `eta`, which must map into `[0, 1]` and be 1-Lipschitz. The marginals
    /// carry no smoothness requirement.
    pub fn group_shift(pa: Density, pb: Density, eta: PiecewiseLinearFn) -> Result<Self> {
        if eta.domain() != (0.0, 1.0) {
            return Err(Error::InvalidInput(format!(
                "eta must be defined on [0, 1], got {:?}",
                eta.domain()
            )));
        }
        if eta.min_value() < 0.0 || eta.max_value() > 1.0 {
            return Err(Error::InvalidInput("eta must take values in [0, 1]".into()));
        }
        let lip = eta.lipschitz_constant();
        if !lip.is_within(1.0 + LIPSCHITZ_SLACK) {
            return Err(Error::InvalidInput(format!(
                "eta has Lipschitz constant {} > 1",
                lip.constant
            )));
        }
        let test_marginal = Density::mixture(&pa, &pb, 0.5)?;
        Ok(Self {
            kind: ShiftKind::GroupShift,
            p_maj: pa,
            p_min: pb,
            eta: Some(eta),
            test_marginal,
        })
    }

    pub fn kind(&self) -> ShiftKind {
        self.kind
    }

    pub fn p_maj(&self) -> &Density {
        &self.p_maj
    }

    pub fn p_min(&self) -> &Density {
        &self.p_min
    }

    /// Shared conditional `P(y = 1 | x)`; `None` for label shift.
    pub fn eta(&self) -> Option<&PiecewiseLinearFn> {
        self.eta.as_ref()
    }

    /// `P_test(x) = (P_maj(x) + P_min(x)) / 2`.
    pub fn test_marginal(&self) -> &Density {
        &self.test_marginal
    }

    /// `P_test(y = 1 | x)`. For label shift this is `P_1 / (P_1 + P_{-1})`,
    /// taken as 1/2 where both vanish.
    pub fn conditional_positive(&self, x: f64) -> f64 {
        match &self.eta {
            Some(eta) => eta.eval(x),
            None => {
                let p = self.p_maj.eval(x);
                let q = self.p_min.eval(x);
                if p + q > 0.0 {
                    p / (p + q)
                } else {
                    0.5
                }
            }
        }
    }

    /// Two piecewise-linear factors whose product is the joint test density
    /// `P_test(x, y = label)`.
    pub fn test_joint_factors(&self, label: Label) -> (PiecewiseLinearFn, PiecewiseLinearFn) {
        match (&self.eta, label) {
            (None, Label::Pos) => (
                self.p_maj.shape().affine(0.5, 0.0),
                PiecewiseLinearFn::constant(1.0),
            ),
            (None, Label::Neg) => (
                self.p_min.shape().affine(0.5, 0.0),
                PiecewiseLinearFn::constant(1.0),
            ),
            (Some(eta), Label::Pos) => (eta.clone(), self.test_marginal.shape().clone()),
            (Some(eta), Label::Neg) => (eta.affine(-1.0, 1.0), self.test_marginal.shape().clone()),
        }
    }

    /// A piecewise-linear function whose sign is the Bayes decision:
    /// `P_1 - P_{-1}` for label shift, `eta - 1/2` for group shift.
    pub fn discriminant(&self) -> PiecewiseLinearFn {
        match &self.eta {
            Some(eta) => eta.affine(1.0, -0.5),
            None => self
                .p_maj
                .shape()
                .combine(self.p_min.shape(), |a, b| a - b)
                .expect("densities share the domain [0, 1]"),
        }
    }

    /// Density of a training feature from `group`.
    pub fn group_density(&self, group: Group) -> &Density {
        match group {
            Group::Majority => &self.p_maj,
            Group::Minority => &self.p_min,
        }
    }
}

fn to_f64(v: &[i8]) -> Vec<f64> {
    v.iter().map(|&t| f64::from(t)).collect()
}

/// Class conditionals `1 + v_{±1,j} φ_K(x - c_j)` on each bin.
pub fn make_label_shift_hard(index: &LabelShiftIndex) -> ShiftInstance {
    let p1 = hat_perturbation(&to_f64(&index.v1), 1.0, 1.0)
        .and_then(Density::new)
        .expect("hard label-shift conditional is a valid density");
    let pm1 = hat_perturbation(&to_f64(&index.vm1), 1.0, 1.0)
        .and_then(Density::new)
        .expect("hard label-shift conditional is a valid density");
    ShiftInstance::label_shift(p1, pm1).expect("hard label-shift family is 1-Lipschitz")
}

/// Step marginals `P_a = 2 - tau` / `tau` on the two halves, `P_b = 2 - P_a`,
/// and `eta = (1 + v_j φ_K(x - c_j)) / 2` on each bin.
pub fn make_group_shift_hard(index: &GroupShiftIndex) -> ShiftInstance {
    let pa = Density::step(2.0 - index.tau).expect("tau in [0, 1]");
    let pb = Density::step(index.tau).expect("tau in [0, 1]");
    let eta = hat_perturbation(&to_f64(&index.v), 0.5, 0.5).expect("K >= 1");
    ShiftInstance::group_shift(pa, pb, eta).expect("hard group-shift family is valid")
}

fn random_trit<R: Rng + ?Sized>(rng: &mut R) -> i8 {
    rng.random_range(0..3i8) - 1
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

pub fn random_label_shift_index<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<LabelShiftIndex> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    let v1 = (0..k).map(|_| random_trit(rng)).collect();
    let vm1 = (0..k).map(|_| random_trit(rng)).collect();
    LabelShiftIndex::new(v1, vm1)
}

pub fn random_group_shift_index<R: Rng + ?Sized>(
    k: usize,
    tau: f64,
    rng: &mut R,
) -> Result<GroupShiftIndex> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    let v = (0..k).map(|_| random_sign(rng)).collect();
    GroupShiftIndex::new(v, tau)
}

/// Uniform draw from the index set of the hard family of `kind`. `tau` is
/// required for group shift and ignored otherwise.
pub fn random_index<R: Rng + ?Sized>(
    kind: ShiftKind,
    k: usize,
    tau: Option<f64>,
    rng: &mut R,
) -> Result<FamilyIndex> {
    match kind {
        ShiftKind::LabelShift => Ok(FamilyIndex::Label(random_label_shift_index(k, rng)?)),
        ShiftKind::GroupShift => {
            let tau =
                tau.ok_or_else(|| Error::InvalidParameter("group-shift index needs tau".into()))?;
            Ok(FamilyIndex::Group(random_group_shift_index(k, tau, rng)?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Majority,
    Minority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub y: Label,
    pub group: Group,
}

/// Training set `S = S_maj ∪ S_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    kind: ShiftKind,
    samples: Vec<Sample>,
    n_maj: usize,
    n_min: usize,
}

impl Dataset {
    /// Counts are derived from the group tags.
    pub fn new(kind: ShiftKind, samples: Vec<Sample>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| !(0.0..=1.0).contains(&s.x)) {
            return Err(Error::InvalidInput(format!(
                "sample x = {} outside [0, 1]",
                s.x
            )));
        }
        let n_maj = samples
            .iter()
            .filter(|s| s.group == Group::Majority)
            .count();
        let n_min = samples.len() - n_maj;
        Ok(Self {
            kind,
            samples,
            n_maj,
            n_min,
        })
    }

    pub fn kind(&self) -> ShiftKind {
        self.kind
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn n_maj(&self) -> usize {
        self.n_maj
    }

    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Imbalance ratio `n_maj / n_min`.
    pub fn imbalance_ratio(&self) -> Option<f64> {
        (self.n_min > 0).then(|| self.n_maj as f64 / self.n_min as f64)
    }

    pub fn group(&self, group: Group) -> impl Iterator<Item = &Sample> + '_ {
        self.samples.iter().filter(move |s| s.group == group)
    }
}

/// Draws `n_maj` i.i.d. samples from `P_maj` followed by `n_min` from `P_min`.
///
/// Label-shift labels are fixed by group. Group-shift labels use one uniform
/// per sample, `y = +1` iff `u < eta(x)`.
pub fn draw_dataset<R: Rng + ?Sized>(
    instance: &ShiftInstance,
    n_maj: usize,
    n_min: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if n_maj < n_min {
        return Err(Error::InvalidInput(format!(
            "n_maj = {n_maj} must be at least n_min = {n_min}"
        )));
    }
    let mut samples = Vec::with_capacity(n_maj + n_min);
    for (group, n) in [(Group::Majority, n_maj), (Group::Minority, n_min)] {
        let density = instance.group_density(group);
        for _ in 0..n {
            let x = density.sample(rng);
            let y = match (instance.eta(), group) {
                (None, Group::Majority) => Label::Pos,
                (None, Group::Minority) => Label::Neg,
                (Some(eta), _) => {
                    if rng.random::<f64>() < eta.eval(x) {
                        Label::Pos
                    } else {
                        Label::Neg
                    }
                }
            };
            samples.push(Sample { x, y, group });
        }
    }
    Ok(Dataset {
        kind: instance.kind(),
        samples,
        n_maj,
        n_min,
    })
}

fn canonical_order(a: &Sample, b: &Sample) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x).then(a.y.cmp(&b.y))
}

/// Keeps every minority sample and `n_min` majority samples chosen uniformly
/// without replacement.
///
/// Majority samples are put in a canonical order before selection, so the
/// result depends on the input only as a multiset (given the rng state).
pub fn undersample<R: Rng + ?Sized>(data: &Dataset, rng: &mut R) -> Result<Dataset> {
    if data.n_min > data.n_maj {
        return Err(Error::InvalidInput(format!(
            "cannot undersample: n_min = {} exceeds n_maj = {}",
            data.n_min, data.n_maj
        )));
    }
    let mut majority: Vec<Sample> = data.group(Group::Majority).copied().collect();
    majority.sort_by(canonical_order);
    let mut chosen = index::sample(rng, majority.len(), data.n_min).into_vec();
    chosen.sort_unstable();

    let mut samples: Vec<Sample> = data.group(Group::Minority).copied().collect();
    samples.extend(chosen.into_iter().map(|i| majority[i]));
    Ok(Dataset {
        kind: data.kind,
        samples,
        n_maj: data.n_min,
        n_min: data.n_min,
    })
}
