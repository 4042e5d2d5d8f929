//! Exact test risk, Bayes risk and the closed-form minimax lower bounds.

use serde::{Deserialize, Serialize};

use crate::classifier::{Label, PiecewiseConstantClassifier};
use crate::density::integrate_product;
use crate::error::{Error, Result};
use crate::instances::{make_label_shift_hard, LabelShiftIndex, ShiftInstance, ShiftKind};

/// Roots closer than this to an existing breakpoint are merged into it.
pub const ROOT_MERGE_TOLERANCE: f64 = 1e-14;

/// Slack allowed below zero before an excess risk counts as an integration
/// error.
pub const EXCESS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub risk: f64,
    pub bayes_risk: f64,
    pub excess_risk: f64,
}

/// Exact `P_test(f(x) != y)`.
pub fn risk(f: &PiecewiseConstantClassifier, instance: &ShiftInstance) -> f64 {
    let wrong_pos = instance.test_joint_factors(Label::Pos);
    let wrong_neg = instance.test_joint_factors(Label::Neg);
    f.cells()
        .map(|(lo, hi, label)| {
            // Predicting `label` errs on the mass of the other label.
            let (a, b) = match label {
                Label::Pos => &wrong_neg,
                Label::Neg => &wrong_pos,
            };
            integrate_product(a, b, lo, hi).expect("classifier cells are ordered")
        })
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// The Bayes classifier, `+1` exactly where the discriminant is strictly
/// positive, together with its risk.
pub fn bayes_risk(instance: &ShiftInstance) -> (PiecewiseConstantClassifier, f64) {
    let d = instance.discriminant();
    let mut cuts: Vec<f64> = Vec::new();
    for seg in d.segments() {
        cuts.push(seg.x0);
        if seg.y0 * seg.y1 < 0.0 {
            let root = seg.x0 - seg.y0 / seg.slope();
            if root > seg.x0 + ROOT_MERGE_TOLERANCE && root < seg.x1 - ROOT_MERGE_TOLERANCE {
                cuts.push(root);
            }
        }
    }
    cuts.push(1.0);
    cuts.dedup_by(|b, a| *b - *a <= ROOT_MERGE_TOLERANCE);
    *cuts.last_mut().expect("nonempty") = 1.0;
    let labels = cuts
        .windows(2)
        .map(|w| Label::from_strict_positive(d.eval(0.5 * (w[0] + w[1]))))
        .collect();
    let clf = PiecewiseConstantClassifier::new(cuts, labels)
        .expect("cuts are increasing and cover [0, 1]")
        .simplified();
    let r = risk(&clf, instance);
    (clf, r)
}

pub fn excess_risk(
    f: &PiecewiseConstantClassifier,
    instance: &ShiftInstance,
) -> Result<RiskReport> {
    let r = risk(f, instance);
    let (_, b) = bayes_risk(instance);
    let excess = r - b;
    if excess < -EXCESS_TOLERANCE {
        return Err(Error::Internal(format!(
            "negative excess risk {excess:e} (risk {r}, bayes {b})"
        )));
    }
    Ok(RiskReport {
        risk: r,
        bayes_risk: b,
        excess_risk: excess.max(0.0),
    })
}

/// Per-bin excess `R_j = q_{j,-A_j} - min(q_{j,1}, q_{j,-1})`, where `A_j` is
/// the prediction of `f` on bin `j` and `q_{j,y}` the test probability of
/// label `y` conditional on landing in bin `j`.
pub fn per_interval_excess(
    f: &PiecewiseConstantClassifier,
    instance: &ShiftInstance,
    k: usize,
) -> Result<Vec<f64>> {
    if instance.kind() != ShiftKind::GroupShift {
        return Err(Error::WrongScenario {
            expected: ShiftKind::GroupShift,
        });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    let kf = k as f64;
    if let Some(&b) = f
        .breakpoints()
        .iter()
        .find(|&&b| (b * kf - (b * kf).round()).abs() > 1e-9)
    {
        return Err(Error::InvalidInput(format!(
            "classifier breakpoint {b} is not on the 1/{k} grid"
        )));
    }
    let (eta, p_test) = instance.test_joint_factors(Label::Pos);
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let (lo, hi) = (j as f64 / kf, (j + 1) as f64 / kf);
        let mass = p_test.integrate(lo, hi)?;
        if mass <= 0.0 {
            out.push(0.0);
            continue;
        }
        let q_pos = (integrate_product(&eta, &p_test, lo, hi)? / mass).clamp(0.0, 1.0);
        let q_neg = 1.0 - q_pos;
        let wrong = match f.predict(0.5 * (lo + hi)) {
            Label::Pos => q_neg,
            Label::Neg => q_pos,
        };
        out.push((wrong - q_pos.min(q_neg)).max(0.0));
    }
    Ok(out)
}

/// Family-averaged Bayes risk of the hard label-shift family with `k` bins,
/// by exact enumeration of the nine trit pairs. Bayes risk is additive over
/// bins, so averaging the nine constant indices gives the family average.
pub fn family_bayes_risk_label_shift(k: usize) -> Result<f64> {
    let mut total = 0.0;
    for a in [-1i8, 0, 1] {
        for b in [-1i8, 0, 1] {
            let idx = LabelShiftIndex::new(vec![a; k], vec![b; k])?;
            total += bayes_risk(&make_label_shift_hard(&idx)).1;
        }
    }
    Ok(total / 9.0)
}

fn check_count(name: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter(format!("{name} must be >= 1")));
    }
    Ok(())
}

/// Minimax lower bound under label shift: `1 / (600 n_min^{1/3})`.
pub fn lower_bound_label_shift(n_min: usize) -> Result<f64> {
    check_count("n_min", n_min)?;
    Ok(1.0 / (600.0 * (n_min as f64).cbrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupShiftBound {
    /// `1 / (200 (n_min (2 - tau) + n_maj tau)^{1/3})`.
    pub primary: f64,
    /// `1 / (200 n_min^{1/3} (rho tau + 2)^{1/3})` with `rho = n_maj / n_min`.
    pub secondary: f64,
}

/// Minimax lower bound under group shift with overlap `tau`.
pub fn lower_bound_group_shift(n_min: usize, n_maj: usize, tau: f64) -> Result<GroupShiftBound> {
    check_count("n_min", n_min)?;
    if n_maj < n_min {
        return Err(Error::InvalidParameter(format!(
            "n_maj ({n_maj}) must be >= n_min ({n_min})"
        )));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!(
            "tau must lie in [0, 1], got {tau}"
        )));
    }
    let (m, n) = (n_min as f64, n_maj as f64);
    let rho = n / m;
    Ok(GroupShiftBound {
        primary: 1.0 / (200.0 * (m * (2.0 - tau) + n * tau).cbrt()),
        secondary: 1.0 / (200.0 * m.cbrt() * (rho * tau + 2.0).cbrt()),
    })
}

/// The label-shift bound before `K` is optimized:
/// `exp(-n_min / (3 K^3)) / (288 K)`.
pub fn intermediate_lower_bound_label_shift(n_min: usize, k: usize) -> Result<f64> {
    check_count("n_min", n_min)?;
    check_count("K", k)?;
    let kf = k as f64;
    Ok((-(n_min as f64) / (3.0 * kf.powi(3))).exp() / (288.0 * kf))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub n_min: usize,
    pub n_maj: usize,
    pub tau: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundCurve {
    pub points: Vec<BoundPoint>,
}

impl BoundCurve {
    /// Label-shift bound over `(n_min, n_maj)` pairs; `n_maj` is carried for
    /// reference only.
    pub fn label_shift(grid: &[(usize, usize)]) -> Result<Self> {
        let points = grid
            .iter()
            .map(|&(n_min, n_maj)| {
                Ok(BoundPoint {
                    n_min,
                    n_maj,
                    tau: None,
                    value: lower_bound_label_shift(n_min)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { points })
    }

    pub fn group_shift(grid: &[(usize, usize)], tau: f64) -> Result<Self> {
        let points = grid
            .iter()
            .map(|&(n_min, n_maj)| {
                Ok(BoundPoint {
                    n_min,
                    n_maj,
                    tau: Some(tau),
                    value: lower_bound_group_shift(n_min, n_maj, tau)?.primary,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { points })
    }

    pub fn for_kind(kind: ShiftKind, grid: &[(usize, usize)], tau: Option<f64>) -> Result<Self> {
        match kind {
            ShiftKind::LabelShift => Self::label_shift(grid),
            ShiftKind::GroupShift => Self::group_shift(grid, tau.unwrap_or(0.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{Density, PiecewiseLinearFn};
    use crate::instances::{make_group_shift_hard, GroupShiftIndex};

    fn extreme(k: usize) -> ShiftInstance {
        make_label_shift_hard(&LabelShiftIndex::new(vec![1; k], vec![-1; k]).unwrap())
    }

    #[test]
    fn constant_pos_on_label_shift_is_half() {
        let inst = extreme(4);
        let r = risk(&PiecewiseConstantClassifier::constant(Label::Pos), &inst);
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn extreme_instance_bayes_risk() {
        let inst = extreme(4);
        let (clf, b) = bayes_risk(&inst);
        assert!((b - (0.5 - 1.0 / 64.0)).abs() < 1e-15, "{b}");
        assert!((risk(&clf, &inst) - b).abs() < 1e-15);
        let rep = excess_risk(&clf.flipped(), &inst).unwrap();
        assert!((rep.excess_risk - 1.0 / 32.0).abs() < 1e-14);
        assert!(excess_risk(&clf, &inst).unwrap().excess_risk.abs() < 1e-12);
    }

    #[test]
    fn equal_conditionals_have_half_bayes_risk() {
        let inst = ShiftInstance::label_shift(Density::uniform(), Density::uniform()).unwrap();
        let (clf, b) = bayes_risk(&inst);
        assert_eq!(b, 0.5);
        assert!(clf.same_function(&PiecewiseConstantClassifier::constant(Label::Neg)));
        let inst = make_label_shift_hard(&LabelShiftIndex::new(vec![0; 3], vec![0; 3]).unwrap());
        let rep = excess_risk(&PiecewiseConstantClassifier::constant(Label::Pos), &inst).unwrap();
        assert!(rep.excess_risk.abs() < 1e-15);
    }

    #[test]
    fn eta_one_has_zero_bayes_risk() {
        let inst = ShiftInstance::group_shift(
            Density::step(1.5).unwrap(),
            Density::step(0.5).unwrap(),
            PiecewiseLinearFn::constant(1.0),
        )
        .unwrap();
        let (clf, b) = bayes_risk(&inst);
        assert_eq!(b, 0.0);
        assert_eq!(clf.labels(), &[Label::Pos]);
    }

    #[test]
    fn family_bayes_risk_at_k4() {
        let v = family_bayes_risk_label_shift(4).unwrap();
        assert!((v - 71.0 / 144.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn flip_sums_to_one_for_label_shift() {
        let inst =
            make_label_shift_hard(&LabelShiftIndex::new(vec![1, 0, -1], vec![-1, 1, 0]).unwrap());
        let f = PiecewiseConstantClassifier::new(
            vec![0.0, 0.13, 0.5, 0.77, 1.0],
            vec![Label::Pos, Label::Neg, Label::Pos, Label::Neg],
        )
        .unwrap();
        assert!((risk(&f, &inst) + risk(&f.flipped(), &inst) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn per_interval_constant_eta() {
        let inst = ShiftInstance::group_shift(
            Density::uniform(),
            Density::uniform(),
            PiecewiseLinearFn::constant(0.6),
        )
        .unwrap();
        let r = per_interval_excess(&PiecewiseConstantClassifier::constant(Label::Neg), &inst, 1)
            .unwrap();
        assert!((r[0] - 0.2).abs() < 1e-15);
        let r = per_interval_excess(&PiecewiseConstantClassifier::constant(Label::Pos), &inst, 1)
            .unwrap();
        assert_eq!(r, vec![0.0]);
    }

    #[test]
    fn per_interval_rejects_misaligned_and_label_shift() {
        let inst = make_group_shift_hard(&GroupShiftIndex::new(vec![1, -1], 0.5).unwrap());
        let f = PiecewiseConstantClassifier::new(vec![0.0, 0.3, 1.0], vec![Label::Pos, Label::Neg])
            .unwrap();
        assert!(matches!(
            per_interval_excess(&f, &inst, 2),
            Err(Error::InvalidInput(_))
        ));
        let f = PiecewiseConstantClassifier::from_bin_labels(vec![Label::Pos, Label::Neg]).unwrap();
        assert!(per_interval_excess(&f, &inst, 2).is_ok());
        assert!(per_interval_excess(&f, &extreme(2), 2).is_err());
    }

    #[test]
    fn bound_examples() {
        assert_eq!(lower_bound_label_shift(1).unwrap(), 1.0 / 600.0);
        assert_eq!(lower_bound_label_shift(1000).unwrap(), 1.0 / 6000.0);
        assert!(lower_bound_label_shift(0).is_err());
        let b = lower_bound_group_shift(100, 1000, 0.5).unwrap();
        assert!((b.primary - 1.0 / (200.0 * 650f64.cbrt())).abs() < 1e-15);
        assert!((b.primary - 5.772e-4).abs() < 1e-7);
        let b = lower_bound_group_shift(10, 40, 0.0).unwrap();
        assert!((b.primary - 1.0 / (200.0 * 20f64.cbrt())).abs() < 1e-15);
        assert!((b.primary - b.secondary).abs() < 1e-15);
        assert!(lower_bound_group_shift(10, 40, 1.5).is_err());
        assert!(lower_bound_group_shift(10, 5, 0.5).is_err());
        let v = intermediate_lower_bound_label_shift(3, 1).unwrap();
        assert!((v - (-1f64).exp() / 288.0).abs() < 1e-15);
        assert!((v - 1.2774e-3).abs() < 1e-7);
    }

    #[test]
    fn bound_curve_decreases() {
        let grid: Vec<_> = [8usize, 64, 512].iter().map(|&n| (n, 4 * n)).collect();
        for c in [
            BoundCurve::label_shift(&grid).unwrap(),
            BoundCurve::group_shift(&grid, 0.3).unwrap(),
        ] {
            assert!(c.points.windows(2).all(|w| w[1].value < w[0].value));
            assert!(c.points.iter().all(|p| p.value > 0.0));
        }
    }
}
