use shiftbin_core::harness::{
    fit_rate, mean_and_se, minority_majority_sweep, run_experiment, run_experiment_with_threads,
    summarize, Arm, EstimatorKind, IndexMode, SweepConfig, SweepRecord,
};
use shiftbin_core::{ExperimentConfig, ShiftKind};

fn grid(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|p| 1usize << p).collect()
}

#[test]
fn rate_envelope_from_smallest_n_min() {
    for kind in [ShiftKind::LabelShift, ShiftKind::GroupShift] {
        let mut cfg = ExperimentConfig::new(kind, 1, grid(5, 12), 99);
        if kind == ShiftKind::GroupShift {
            cfg.tau = Some(0.0);
        }
        cfg.replications = 400;
        let cells = summarize(&run_experiment(&cfg).unwrap());
        let c = cells[0].mean_excess_risk * (cells[0].n_min as f64).cbrt();
        let c_se = cells[0].se_excess_risk * (cells[0].n_min as f64).cbrt();
        for cell in &cells[1..] {
            let scale = (cell.n_min as f64).cbrt().recip();
            let envelope = c * scale;
            let se = (cell.se_excess_risk.powi(2) + (c_se * scale).powi(2)).sqrt();
            assert!(
                cell.mean_excess_risk <= envelope + 3.0 * se,
                "{kind} n_min={}: {} > {envelope}",
                cell.n_min,
                cell.mean_excess_risk
            );
        }
    }
}

#[test]
fn label_shift_means_are_positive_and_decrease() {
    let mut cfg = ExperimentConfig::new(ShiftKind::LabelShift, 8, grid(7, 13), 1);
    cfg.replications = 200;
    let records = run_experiment(&cfg).unwrap();
    let cells = summarize(&records);
    assert!(cells.iter().all(|c| c.mean_excess_risk > 0.0));
    assert!(cells.last().unwrap().mean_excess_risk < cells[0].mean_excess_risk);
    assert!(fit_rate(&records).unwrap().slope < 0.0);
}

#[test]
fn fixed_index_mode_is_seed_determined() {
    let mut cfg = ExperimentConfig::new(ShiftKind::GroupShift, 3, vec![16, 32, 64], 5);
    cfg.tau = Some(0.4);
    cfg.index_mode = IndexMode::Fixed;
    cfg.replications = 5;
    cfg.estimators = EstimatorKind::ALL
        .into_iter()
        .filter(|&e| e != EstimatorKind::HistogramPlugin)
        .collect();
    let a = run_experiment_with_threads(&cfg, Some(1)).unwrap();
    let b = run_experiment_with_threads(&cfg, Some(3)).unwrap();
    assert_eq!(a, b);
    // One instance for every cell.
    assert!(a.iter().all(|r| r.bayes_risk == a[0].bayes_risk));
    cfg.seed = 6;
    assert_ne!(run_experiment(&cfg).unwrap(), a);
}

fn stats(records: &[SweepRecord], arm: Arm, step: usize) -> (f64, f64) {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.arm == arm && r.step == step)
        .map(|r| r.record.excess_risk)
        .collect();
    mean_and_se(&v)
}

#[test]
fn sweep_arms_behave_as_expected() {
    let mut cfg = ExperimentConfig::new(ShiftKind::GroupShift, 1, vec![64], 77);
    cfg.tau = Some(0.0);
    cfg.replications = 400;
    cfg.sweep = Some(SweepConfig {
        base_n_min: 64,
        base_n_maj: 256,
        additions: vec![0, 192, 1280],
        arms: vec![Arm::AddMinority, Arm::AddMajority, Arm::AddBoth],
    });
    let records = minority_majority_sweep(&cfg, None).unwrap();
    assert_eq!(records.len(), 3 * 3 * 400);

    // Majority additions are discarded by undersampling.
    let maj: Vec<_> = (0..3)
        .map(|s| stats(&records, Arm::AddMajority, s))
        .collect();
    for w in maj.windows(2) {
        assert!((w[0].0 - w[1].0).abs() <= 3.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
    }
    // 64 -> 256 minority samples.
    let (m0, _) = stats(&records, Arm::AddMinority, 0);
    let (m1, _) = stats(&records, Arm::AddMinority, 1);
    assert!(m1 < m0);
    // At equal n_min the extra majority samples are discarded.
    for step in 0..3 {
        let (b, bs) = stats(&records, Arm::AddBoth, step);
        let (a, as_) = stats(&records, Arm::AddMinority, step);
        assert!(
            (b - a).abs() <= 3.0 * (bs * bs + as_ * as_).sqrt(),
            "step {step}: {b} vs {a}"
        );
    }
    let both = records
        .iter()
        .find(|r| r.arm == Arm::AddBoth && r.step == 2)
        .unwrap();
    assert_eq!(
        (both.record.n_min, both.record.n_maj),
        (64 + 1280, 256 + 4 * 1280)
    );
}
