use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shiftbin_core::density::{bin_center, Hat};
use shiftbin_core::estimators::{
    compute_family_posterior, fit_full_binning, fit_histogram_plugin, fit_undersampled_binning,
    fit_weighted_binning, posterior_oracle_classifier,
};
use shiftbin_core::instances::{
    draw_dataset, make_group_shift_hard, random_index, undersample, Group,
};
use shiftbin_core::risk::{excess_risk, risk};
use shiftbin_core::{Dataset, GroupShiftIndex, Label, Sample, ShiftKind};

fn random_dataset(seed: u64, kind: ShiftKind) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=4);
    let tau = (kind == ShiftKind::GroupShift).then(|| rng.random());
    let inst = random_index(kind, k, tau, &mut rng).unwrap().instance();
    let n_min = rng.random_range(1..=40);
    let n_maj = n_min + rng.random_range(0..=80);
    draw_dataset(&inst, n_maj, n_min, &mut rng).unwrap()
}

proptest! {
    #[test]
    fn histogram_plugin_equals_undersampled_binning(seed in any::<u64>(), k in 1usize..20) {
        let data = random_dataset(seed, ShiftKind::LabelShift);
        let rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let (_, plug) = fit_histogram_plugin(&data, k, &mut rng.clone()).unwrap();
        let bin = fit_undersampled_binning(&data, k, &mut rng.clone()).unwrap();
        prop_assert_eq!(plug.labels(), bin.labels());
        prop_assert_eq!(plug.breakpoints(), bin.breakpoints());
    }

    #[test]
    fn weighted_at_rho_one_equals_full(seed in any::<u64>(), k in 1usize..20, group in any::<bool>()) {
        let kind = if group { ShiftKind::GroupShift } else { ShiftKind::LabelShift };
        let mut data = random_dataset(seed, kind);
        let n = data.n_min();
        let samples: Vec<Sample> = data.group(Group::Minority).copied()
            .chain(data.group(Group::Majority).take(n).copied())
            .collect();
        data = Dataset::new(kind, samples).unwrap();
        prop_assert_eq!(data.n_maj(), data.n_min());
        prop_assert_eq!(fit_weighted_binning(&data, k).unwrap(), fit_full_binning(&data, k).unwrap());
    }

    #[test]
    fn undersampling_balances(seed in any::<u64>()) {
        let data = random_dataset(seed, ShiftKind::GroupShift);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let us = undersample(&data, &mut rng).unwrap();
        prop_assert_eq!(us.len(), 2 * data.n_min());
        prop_assert_eq!(us.n_maj(), us.n_min());
        prop_assert!(us.group(Group::Minority).eq(data.group(Group::Minority)));
    }

    #[test]
    fn undersampled_binning_ignores_sample_order(seed in any::<u64>(), k in 1usize..10) {
        let data = random_dataset(seed, ShiftKind::LabelShift);
        let mut shuffled = data.samples().to_vec();
        shuffled.reverse();
        let other = Dataset::new(data.kind(), shuffled).unwrap();
        let rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(
            fit_undersampled_binning(&data, k, &mut rng.clone()).unwrap(),
            fit_undersampled_binning(&other, k, &mut rng.clone()).unwrap()
        );
    }
}

/// Brute force over all `2^K` sign vectors of the group-shift family: the
/// oracle must minimize the posterior-weighted risk among all half-bin
/// classifiers.
#[test]
fn group_oracle_minimizes_posterior_risk_by_enumeration() {
    let k = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let truth = random_index(ShiftKind::GroupShift, k, Some(0.3), &mut rng)
            .unwrap()
            .instance();
        let data = draw_dataset(&truth, 6, 3, &mut rng).unwrap();
        let hat = Hat::new(k).unwrap();
        let index_sets: Vec<Vec<i8>> = (0..1u32 << k)
            .map(|m| {
                (0..k)
                    .map(|j| if m >> j & 1 == 1 { 1 } else { -1 })
                    .collect()
            })
            .collect();
        let weights: Vec<f64> = index_sets
            .iter()
            .map(|v| {
                data.samples()
                    .iter()
                    .map(|s| {
                        let j = shiftbin_core::classifier::bin_index(s.x, k);
                        let h = hat.eval(s.x - bin_center(j, k));
                        (1.0 + f64::from(s.y.sign()) * f64::from(v[j]) * h) / 2.0
                    })
                    .product()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let instances: Vec<_> = index_sets
            .iter()
            .map(|v| make_group_shift_hard(&GroupShiftIndex::new(v.clone(), 0.3).unwrap()))
            .collect();
        let mixed = |f: &shiftbin_core::PiecewiseConstantClassifier| -> f64 {
            instances
                .iter()
                .zip(&weights)
                .map(|(i, w)| w * risk(f, i))
                .sum::<f64>()
                / total
        };
        let post = compute_family_posterior(&data, k, ShiftKind::GroupShift).unwrap();
        for j in 0..k {
            let p_plus: f64 = index_sets
                .iter()
                .zip(&weights)
                .filter(|(s, _)| s[j] == 1)
                .map(|(_, w)| w)
                .sum::<f64>()
                / total;
            assert!((post.table(j)[1] - p_plus).abs() < 1e-12);
        }
        let oracle = posterior_oracle_classifier(&post);
        let best = mixed(&oracle);
        let bps: Vec<f64> = (0..=2 * k).map(|i| i as f64 / (2 * k) as f64).collect();
        for m in 0..1u32 << (2 * k) {
            let labels = (0..2 * k)
                .map(|i| {
                    if m >> i & 1 == 1 {
                        Label::Pos
                    } else {
                        Label::Neg
                    }
                })
                .collect();
            let f = shiftbin_core::PiecewiseConstantClassifier::new(bps.clone(), labels).unwrap();
            assert!(best <= mixed(&f) + 1e-12);
        }
    }
}

#[test]
fn oracle_beats_undersampled_binning_on_average() {
    let (k, n_min, reps) = (2, 8, 1000);
    let mut diffs = Vec::with_capacity(reps);
    for r in 0..reps as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(r);
        let inst = random_index(ShiftKind::LabelShift, k, None, &mut rng)
            .unwrap()
            .instance();
        let data = draw_dataset(&inst, 4 * n_min, n_min, &mut rng).unwrap();
        let oracle = posterior_oracle_classifier(
            &compute_family_posterior(&data, k, ShiftKind::LabelShift).unwrap(),
        );
        let bin = fit_undersampled_binning(&data, k, &mut rng).unwrap();
        diffs.push(
            excess_risk(&oracle, &inst).unwrap().excess_risk
                - excess_risk(&bin, &inst).unwrap().excess_risk,
        );
    }
    let mean = diffs.iter().sum::<f64>() / reps as f64;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    assert!(
        mean <= 3.0 * sd / (reps as f64).sqrt(),
        "oracle worse by {mean}"
    );
}
