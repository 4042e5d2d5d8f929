#![allow(dead_code)]

use rand::Rng;
use shiftbin_core::density::hat_perturbation;
use shiftbin_core::{
    Density, Label, PiecewiseConstantClassifier, PiecewiseLinearFn, ShiftInstance,
};

/// Positive piecewise-linear density with up to `max_knots` interior knots.
pub fn random_density<R: Rng>(rng: &mut R, max_knots: usize) -> Density {
    let n = rng.random_range(0..=max_knots);
    let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
    xs.push(0.0);
    xs.push(1.0);
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|b, a| *b - *a < 1e-3);
    *xs.last_mut().unwrap() = 1.0;
    let ys: Vec<f64> = xs.iter().map(|_| rng.random_range(0.05..2.0)).collect();
    let raw = PiecewiseLinearFn::on_unit_interval(xs.clone(), ys.clone()).unwrap();
    let mass = raw.integrate(0.0, 1.0).unwrap();
    let ys = ys.iter().map(|y| y / mass).collect();
    Density::new(PiecewiseLinearFn::on_unit_interval(xs, ys).unwrap()).unwrap()
}

/// `1 + sum_j c_j φ_K(x - center_j)` with real `c_j` in `[-1, 1]`.
pub fn random_lipschitz_density<R: Rng>(rng: &mut R) -> Density {
    let k = rng.random_range(1..=6);
    let coeffs: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Density::new(hat_perturbation(&coeffs, 1.0, 1.0).unwrap()).unwrap()
}

pub fn random_eta<R: Rng>(rng: &mut R) -> PiecewiseLinearFn {
    let k = rng.random_range(1..=6);
    let coeffs: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let base = rng.random_range(0.35..0.65);
    hat_perturbation(&coeffs, base, 1.0).unwrap()
}

pub fn random_label_shift<R: Rng>(rng: &mut R) -> ShiftInstance {
    ShiftInstance::label_shift(random_lipschitz_density(rng), random_lipschitz_density(rng))
        .unwrap()
}

pub fn random_group_shift<R: Rng>(rng: &mut R) -> ShiftInstance {
    ShiftInstance::group_shift(
        random_density(rng, 6),
        random_density(rng, 6),
        random_eta(rng),
    )
    .unwrap()
}

pub fn random_classifier<R: Rng>(rng: &mut R, max_cells: usize) -> PiecewiseConstantClassifier {
    let cells = rng.random_range(1..=max_cells);
    let mut xs: Vec<f64> = (1..cells).map(|_| rng.random::<f64>()).collect();
    xs.push(0.0);
    xs.push(1.0);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let labels = (1..xs.len())
        .map(|_| {
            if rng.random::<bool>() {
                Label::Pos
            } else {
                Label::Neg
            }
        })
        .collect();
    PiecewiseConstantClassifier::new(xs, labels).unwrap()
}

/// Midpoint Riemann sum of the 0-1 test loss on `n` cells.
pub fn riemann_risk(f: &PiecewiseConstantClassifier, inst: &ShiftInstance, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let x = (i as f64 + 0.5) * h;
        let p_pos = match inst.eta() {
            Some(eta) => eta.eval(x) * inst.test_marginal().eval(x),
            None => 0.5 * inst.p_maj().eval(x),
        };
        let p_neg = match inst.eta() {
            Some(eta) => (1.0 - eta.eval(x)) * inst.test_marginal().eval(x),
            None => 0.5 * inst.p_min().eval(x),
        };
        total += match f.predict(x) {
            Label::Pos => p_neg,
            Label::Neg => p_pos,
        };
    }
    total * h
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// 64-node Gauss-Legendre on each piece between the given knots.
pub fn gl_integrate(f: impl Fn(f64) -> f64, knots: &[f64]) -> f64 {
    let rule = gauss_legendre(64);
    knots
        .windows(2)
        .map(|w| {
            let (c, r) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            rule.iter().map(|(x, wt)| wt * f(c + r * x)).sum::<f64>() * r
        })
        .sum()
}
