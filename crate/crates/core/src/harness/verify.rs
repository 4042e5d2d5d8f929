use serde::{Deserialize, Serialize};

use crate::density::{hat_function, hat_perturbation, kl_integral, overlap, Density};
use crate::error::Result;
use crate::risk::family_bayes_risk_label_shift;

const EXACT_TOLERANCE: f64 = 1e-12;
const OVERLAP_TOLERANCE: f64 = 1e-9;

/// One deterministic check. `delta` is `|measured - expected|` for equality
/// checks and the amount by which an upper bound is exceeded (zero if it
/// holds) for bound checks; the check passes iff `delta < tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub name: String,
    pub k: Option<usize>,
    pub expected: f64,
    pub measured: f64,
    pub delta: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<LemmaCheck>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &LemmaCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn max_abs_delta(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.delta.abs())
            .fold(0.0, f64::max)
    }
}

struct Builder {
    checks: Vec<LemmaCheck>,
    tolerance_override: Option<f64>,
}

impl Builder {
    fn push(
        &mut self,
        name: &str,
        k: Option<usize>,
        expected: f64,
        measured: f64,
        delta: f64,
        tol: f64,
    ) {
        let tolerance = self.tolerance_override.unwrap_or(tol);
        self.checks.push(LemmaCheck {
            name: name.to_string(),
            k,
            expected,
            measured,
            delta,
            tolerance,
            passed: delta < tolerance,
        });
    }

    fn equal(&mut self, name: &str, k: Option<usize>, expected: f64, measured: f64, tol: f64) {
        self.push(
            name,
            k,
            expected,
            measured,
            (measured - expected).abs(),
            tol,
        );
    }

    /// `0 <= measured <= bound`.
    fn within(&mut self, name: &str, k: Option<usize>, bound: f64, measured: f64, tol: f64) {
        let delta = (measured - bound).max(-measured).max(0.0);
        self.push(name, k, bound, measured, delta, tol);
    }
}

/// Runs the hat-function and hard-family check suite for `K = 1..=k_max`.
pub fn verify_lemmas(k_max: usize) -> Result<VerificationReport> {
    verify_lemmas_with_tolerance(k_max, None)
}

/// As [`verify_lemmas`], with every tolerance replaced by `tolerance_override`
/// when given. Exposed so the failure path can be exercised.
pub fn verify_lemmas_with_tolerance(
    k_max: usize,
    tolerance_override: Option<f64>,
) -> Result<VerificationReport> {
    let mut b = Builder {
        checks: Vec::new(),
        tolerance_override,
    };
    for k in 1..=k_max {
        let kf = k as f64;
        let hat = hat_function(k)?;
        let (lo, hi) = hat.domain();
        b.equal(
            "hat_abs_integral",
            Some(k),
            1.0 / (8.0 * kf * kf),
            hat.integrate_abs(lo, hi)?,
            EXACT_TOLERANCE,
        );

        let plus = hat_perturbation(&vec![1.0; k], 1.0, 1.0)?;
        let minus = hat_perturbation(&vec![-1.0; k], 1.0, 1.0)?;
        let bound = 1.0 / (3.0 * kf.powi(3));
        b.within(
            "kl_hat_plus",
            Some(k),
            bound,
            kl_integral(&plus, &minus, 0.0, 1.0 / kf)?,
            EXACT_TOLERANCE,
        );
        b.within(
            "kl_hat_minus",
            Some(k),
            bound,
            kl_integral(&minus, &plus, 0.0, 1.0 / kf)?,
            EXACT_TOLERANCE,
        );

        b.equal(
            "family_bayes_risk_label_shift",
            Some(k),
            0.5 * (1.0 - 1.0 / (18.0 * kf)),
            family_bayes_risk_label_shift(k)?,
            EXACT_TOLERANCE,
        );
    }

    // E|V_1 - V_{-1}| over independent uniform trits, in integers.
    let trits = [-1i32, 0, 1];
    let numerator: i32 = trits
        .iter()
        .flat_map(|a| trits.iter().map(move |b| (a - b).abs()))
        .sum();
    let exact = numerator * 9 == 8 * 9;
    b.push(
        "trit_abs_difference",
        None,
        8.0 / 9.0,
        f64::from(numerator) / 9.0,
        if exact { 0.0 } else { f64::INFINITY },
        EXACT_TOLERANCE,
    );

    for i in 0..=10 {
        let tau = i as f64 / 10.0;
        let pa = Density::step(2.0 - tau)?;
        let pb = Density::step(tau)?;
        b.equal(
            "step_overlap",
            None,
            tau,
            overlap(&pa, &pb),
            OVERLAP_TOLERANCE,
        );
    }
    Ok(VerificationReport { checks: b.checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_to_k16() {
        let r = verify_lemmas(16).unwrap();
        assert!(r.all_passed(), "{:?}", r.failures().collect::<Vec<_>>());
        assert!(r.max_abs_delta() < 1e-9);
        assert_eq!(r.checks.len(), 16 * 4 + 1 + 11);
    }

    #[test]
    fn zero_tolerance_fails() {
        let r = verify_lemmas_with_tolerance(2, Some(0.0)).unwrap();
        assert!(!r.all_passed());
        assert!(r.failures().any(|c| c.name == "trit_abs_difference"));
    }
}
