//! Continuous piecewise-linear functions and densities on `[0, 1]`.
//!
//! A [`PiecewiseLinearFn`] is stored as its knots `(x_i, y_i)` and is linear
//! between consecutive knots. Outside its domain it is taken to be zero, which
//! is what both the hat function and densities on `[0, 1]` need.
//!
//! Integrals of these functions (and of products of two of them) are computed
//! in closed form. The only quadrature in this module is the adaptive Simpson
//! rule used for KL divergence, whose integrand `p log(p / q)` is not a
//! polynomial.

use rand::Rng;

use crate::error::{Error, Result};

/// Allowed deviation of a density's total mass from one.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Width of the linear ramp that stands in for a jump discontinuity in
/// [`Density::step`].
pub const STEP_RAMP_WIDTH: f64 = 1e-9;

/// Absolute tolerance of the adaptive Simpson rule used by [`kl_integral`].
pub const KL_TOLERANCE: f64 = 1e-10;

/// Maximum recursion depth of the adaptive Simpson rule.
pub const KL_MAX_DEPTH: u32 = 40;

/// One linear piece `[x0, x1]` of a piecewise-linear function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Segment {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn slope(&self) -> f64 {
        (self.y1 - self.y0) / (self.x1 - self.x0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.x0) / (self.x1 - self.x0);
        self.y0 + t * (self.y1 - self.y0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearFn {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinearFn {
    /// Builds a function from knots. Breakpoints must be finite and strictly
    /// increasing; there must be at least two of them.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidFunction(format!(
                "need at least two breakpoints, got {}",
                breakpoints.len()
            )));
        }
        if breakpoints.len() != values.len() {
            return Err(Error::InvalidFunction(format!(
                "{} breakpoints but {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if let Some(bad) = breakpoints.iter().chain(&values).find(|v| !v.is_finite()) {
            return Err(Error::InvalidFunction(format!(
                "non-finite knot coordinate {bad}"
            )));
        }
        if let Some(w) = breakpoints.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidFunction(format!(
                "breakpoints not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self {
            xs: breakpoints,
            ys: values,
        })
    }

    /// Like [`new`](Self::new), additionally requiring the domain to be
    /// exactly `[0, 1]`.
    pub fn on_unit_interval(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let f = Self::new(breakpoints, values)?;
        if f.xs[0] != 0.0 || f.xs[f.xs.len() - 1] != 1.0 {
            return Err(Error::InvalidFunction(format!(
                "domain must be [0, 1], got [{}, {}]",
                f.xs[0],
                f.xs[f.xs.len() - 1]
            )));
        }
        Ok(f)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            xs: vec![0.0, 1.0],
            ys: vec![value, value],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| Segment {
                x0: x[0],
                x1: x[1],
                y0: y[0],
                y1: y[1],
            })
    }

    /// Index of the segment containing `x`, which must lie in the domain.
    fn segment_index(&self, x: f64) -> usize {
        let i = self.xs.partition_point(|&b| b <= x);
        i.saturating_sub(1).min(self.xs.len() - 2)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&x) {
            return 0.0;
        }
        let i = self.segment_index(x);
        if x == self.xs[i] {
            return self.ys[i];
        }
        if x == self.xs[i + 1] {
            return self.ys[i + 1];
        }
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + t * (self.ys[i + 1] - self.ys[i])
    }

    /// Segments clipped to `[a, b] ∩ domain`, with values interpolated at the
    /// clipped ends.
    fn clipped(&self, a: f64, b: f64) -> Result<Vec<Segment>> {
        check_range(a, b)?;
        let (lo, hi) = self.domain();
        let (a, b) = (a.max(lo), b.min(hi));
        if a >= b {
            return Ok(Vec::new());
        }
        let first = self.segment_index(a);
        let last = self.segment_index(b);
        Ok((first..=last)
            .filter_map(|i| {
                let x0 = self.xs[i].max(a);
                let x1 = self.xs[i + 1].min(b);
                (x1 > x0).then(|| Segment {
                    x0,
                    x1,
                    y0: self.eval(x0),
                    y1: self.eval(x1),
                })
            })
            .collect())
    }

    /// Exact integral over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        Ok(self
            .clipped(a, b)?
            .iter()
            .map(|s| 0.5 * (s.y0 + s.y1) * s.width())
            .sum())
    }

    /// Exact integral of `|f|` over `[a, b]`, splitting pieces at sign changes.
    pub fn integrate_abs(&self, a: f64, b: f64) -> Result<f64> {
        Ok(self.clipped(a, b)?.iter().map(abs_area).sum())
    }

    /// Pointwise `op(self, other)` on the union of both knot sets. Only
    /// meaningful for operations that are affine in each argument, since the
    /// result is again interpolated linearly.
    pub fn combine(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.domain() != other.domain() {
            return Err(Error::InvalidFunction(format!(
                "cannot combine functions on {:?} and {:?}",
                self.domain(),
                other.domain()
            )));
        }
        let xs = merge_knots(&self.xs, &other.xs);
        let ys = xs
            .iter()
            .map(|&x| op(self.eval(x), other.eval(x)))
            .collect();
        Self::new(xs, ys)
    }

    /// `scale * f + shift`.
    pub fn affine(&self, scale: f64, shift: f64) -> Self {
        Self {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| scale * y + shift).collect(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.ys.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.ys.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn lipschitz_constant(&self) -> LipschitzCertificate {
        lipschitz_constant(self)
    }
}

fn check_range(a: f64, b: f64) -> Result<()> {
    // Written so that NaN endpoints are rejected too.
    if a <= b {
        Ok(())
    } else {
        Err(Error::InvalidRange { lo: a, hi: b })
    }
}

fn abs_area(s: &Segment) -> f64 {
    let w = s.width();
    if s.y0 * s.y1 >= 0.0 {
        0.5 * (s.y0.abs() + s.y1.abs()) * w
    } else {
        let t = w * s.y0 / (s.y0 - s.y1);
        0.5 * (s.y0.abs() * t + s.y1.abs() * (w - t))
    }
}

/// Sorted union of two increasing knot sequences, dropping exact duplicates.
pub(crate) fn merge_knots(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().chain(b).copied().collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Maximum absolute slope over the segments of a function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzCertificate {
    pub constant: f64,
}

impl LipschitzCertificate {
    pub fn is_within(&self, bound: f64) -> bool {
        self.constant <= bound
    }
}

pub fn lipschitz_constant(f: &PiecewiseLinearFn) -> LipschitzCertificate {
    let constant = f.segments().map(|s| s.slope().abs()).fold(0.0, f64::max);
    LipschitzCertificate { constant }
}

/// Closed-form hat function `φ_K`: an odd tent pair supported on
/// `[-1/(2K), 1/(2K)]` with trough `-1/(4K)` at `-1/(4K)` and peak `1/(4K)` at
/// `1/(4K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hat {
    k: usize,
}

impl Hat {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("hat function needs K >= 1".into()));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Peak height `1/(4K)`.
    pub fn peak(&self) -> f64 {
        1.0 / (4.0 * self.k as f64)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let a = self.peak();
        if (-2.0 * a..=0.0).contains(&x) {
            (x + a).abs() - a
        } else if x > 0.0 && x <= 2.0 * a {
            a - (x - a).abs()
        } else {
            0.0
        }
    }

    pub fn to_fn(&self) -> PiecewiseLinearFn {
        let a = self.peak();
        PiecewiseLinearFn {
            xs: vec![-2.0 * a, -a, 0.0, a, 2.0 * a],
            ys: vec![0.0, -a, 0.0, a, 0.0],
        }
    }
}

/// `φ_K` as a piecewise-linear function on its support `[-1/(2K), 1/(2K)]`.
/// Callers translate it to a bin by evaluating at `x - center`.
pub fn hat_function(k: usize) -> Result<PiecewiseLinearFn> {
    Ok(Hat::new(k)?.to_fn())
}

/// Center of the `j`-th (zero-based) of `k` equal bins on `[0, 1]`.
pub fn bin_center(j: usize, k: usize) -> f64 {
    (2 * j + 1) as f64 / (2 * k) as f64
}

/// `base + scale * coeffs[j] * φ_K(x - center_j)` on each bin `I_j` of `K`
/// equal bins, where `K = coeffs.len()`.
pub fn hat_perturbation(coeffs: &[f64], base: f64, scale: f64) -> Result<PiecewiseLinearFn> {
    let k = coeffs.len();
    let hat = Hat::new(k)?;
    let a = hat.peak();
    let denom = (4 * k) as f64;
    let mut xs = Vec::with_capacity(4 * k + 1);
    let mut ys = Vec::with_capacity(4 * k + 1);
    for (j, &c) in coeffs.iter().enumerate() {
        let bump = scale * c * a;
        for (m, y) in [base, base - bump, base, base + bump]
            .into_iter()
            .enumerate()
        {
            xs.push((4 * j + m) as f64 / denom);
            ys.push(y);
        }
    }
    xs.push(1.0);
    ys.push(base);
    PiecewiseLinearFn::on_unit_interval(xs, ys)
}

pub fn integrate(f: &PiecewiseLinearFn, a: f64, b: f64) -> Result<f64> {
    f.integrate(a, b)
}

/// Exact `∫_a^b f(x) g(x) dx`. Each piece of the common refinement is a
/// quadratic, on which Simpson's rule is exact.
pub fn integrate_product(
    f: &PiecewiseLinearFn,
    g: &PiecewiseLinearFn,
    a: f64,
    b: f64,
) -> Result<f64> {
    check_range(a, b)?;
    let (flo, fhi) = f.domain();
    let (glo, ghi) = g.domain();
    let lo = a.max(flo).max(glo);
    let hi = b.min(fhi).min(ghi);
    if lo >= hi {
        return Ok(0.0);
    }
    let mut knots: Vec<f64> = merge_knots(&f.xs, &g.xs)
        .into_iter()
        .filter(|&x| x > lo && x < hi)
        .collect();
    knots.insert(0, lo);
    knots.push(hi);
    Ok(knots
        .windows(2)
        .map(|w| {
            let (x0, x1) = (w[0], w[1]);
            let xm = 0.5 * (x0 + x1);
            let h = |x: f64| f.eval(x) * g.eval(x);
            (x1 - x0) / 6.0 * (h(x0) + 4.0 * h(xm) + h(x1))
        })
        .sum())
}

/// A probability density on `[0, 1]` with continuous piecewise-linear shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    shape: PiecewiseLinearFn,
    /// `cumulative[i]` is the mass to the left of breakpoint `i`.
    cumulative: Vec<f64>,
}

impl Density {
    /// Validates nonnegativity at the knots (sufficient for a piecewise-linear
    /// shape) and unit mass within [`MASS_TOLERANCE`].
    pub fn new(shape: PiecewiseLinearFn) -> Result<Self> {
        if shape.domain() != (0.0, 1.0) {
            return Err(Error::InvalidDensity(format!(
                "domain must be [0, 1], got {:?}",
                shape.domain()
            )));
        }
        if let Some((x, y)) = shape.xs.iter().zip(&shape.ys).find(|(_, &y)| y < 0.0) {
            return Err(Error::InvalidDensity(format!(
                "negative value {y} at x = {x}"
            )));
        }
        let mut cumulative = Vec::with_capacity(shape.xs.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for s in shape.segments() {
            acc += 0.5 * (s.y0 + s.y1) * s.width();
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDensity(format!("total mass {acc} is not 1")));
        }
        Ok(Self { shape, cumulative })
    }

    pub fn uniform() -> Self {
        Self::new(PiecewiseLinearFn::constant(1.0)).expect("uniform density is valid")
    }

    /// The two-level group marginal: `left` on `[0, 0.5)` and `2 - left` on
    /// `[0.5, 1]`, joined by a linear ramp of width [`STEP_RAMP_WIDTH`]
    /// centered at 0.5. The symmetric ramp keeps the mass at exactly one.
    pub fn step(left: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&left) {
            return Err(Error::InvalidParameter(format!(
                "step level must lie in [0, 2], got {left}"
            )));
        }
        let h = 0.5 * STEP_RAMP_WIDTH;
        let right = 2.0 - left;
        Self::new(PiecewiseLinearFn::on_unit_interval(
            vec![0.0, 0.5 - h, 0.5 + h, 1.0],
            vec![left, left, right, right],
        )?)
    }

    /// `w * a + (1 - w) * b`.
    pub fn mixture(a: &Self, b: &Self, w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidParameter(format!(
                "mixture weight {w} outside [0, 1]"
            )));
        }
        Self::new(a.shape.combine(&b.shape, |u, v| w * u + (1.0 - w) * v)?)
    }

    pub fn shape(&self) -> &PiecewiseLinearFn {
        &self.shape
    }

    pub fn total_mass(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.shape.eval(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return self.total_mass();
        }
        let i = self.shape.segment_index(x);
        let x0 = self.shape.xs[i];
        let y0 = self.shape.ys[i];
        0.5 * (y0 + self.eval(x)) * (x - x0) + self.cumulative[i]
    }

    /// Inverse CDF at `u ∈ [0, 1]`. On each segment the CDF is quadratic; the
    /// root inside the segment is taken in the cancellation-free form
    /// `t = 2r / (y0 + sqrt(y0² + 2 s r))`, which reduces to `r / y0` on flat
    /// segments.
    pub fn quantile(&self, u: f64) -> f64 {
        let total = self.total_mass();
        let target = u.clamp(0.0, 1.0) * total;
        let nseg = self.cumulative.len() - 1;
        let mut i = self
            .cumulative
            .partition_point(|&c| c <= target)
            .saturating_sub(1)
            .min(nseg - 1);
        while i > 0 && self.cumulative[i + 1] <= self.cumulative[i] {
            i -= 1;
        }
        let seg_mass = self.cumulative[i + 1] - self.cumulative[i];
        let r = (target - self.cumulative[i]).clamp(0.0, seg_mass);
        let x0 = self.shape.xs[i];
        let x1 = self.shape.xs[i + 1];
        if r <= 0.0 {
            return x0;
        }
        let y0 = self.shape.ys[i];
        let slope = (self.shape.ys[i + 1] - y0) / (x1 - x0);
        let disc = (y0 * y0 + 2.0 * slope * r).max(0.0);
        let t = 2.0 * r / (y0 + disc.sqrt());
        (x0 + t).clamp(x0, x1)
    }

    /// One exact inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// `(1/2) ∫ |p - q|`, exact.
pub fn tv_distance(p: &Density, q: &Density) -> f64 {
    let diff = p
        .shape
        .combine(&q.shape, |a, b| a - b)
        .expect("densities share the domain [0, 1]");
    (0.5 * diff.integrate_abs(0.0, 1.0).expect("valid range")).clamp(0.0, 1.0)
}

/// `1 - TV(p, q)`.
pub fn overlap(p: &Density, q: &Density) -> f64 {
    1.0 - tv_distance(p, q)
}

/// `∫_a^b p log(p / q)` for nonnegative piecewise-linear `p` and `q`, by
/// adaptive Simpson on each piece of the common refinement.
///
/// Returns [`Error::InfiniteDivergence`] when `q` vanishes where `p` does not.
pub fn kl_integral(p: &PiecewiseLinearFn, q: &PiecewiseLinearFn, a: f64, b: f64) -> Result<f64> {
    check_range(a, b)?;
    if a == b {
        return Ok(0.0);
    }
    let mut knots: Vec<f64> = merge_knots(&p.xs, &q.xs)
        .into_iter()
        .filter(|&x| x > a && x < b)
        .collect();
    knots.insert(0, a);
    knots.push(b);

    let integrand = |x: f64| {
        let pv = p.eval(x);
        if pv <= 0.0 {
            return 0.0;
        }
        let qv = q.eval(x);
        if qv <= 0.0 {
            // Only reached at an endpoint where both vanish; the limit of
            // p log(p/q) there is zero.
            return 0.0;
        }
        pv * (pv / qv).ln()
    };

    let mut total = 0.0;
    for w in knots.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let (p0, p1) = (p.eval(x0), p.eval(x1));
        let (q0, q1) = (q.eval(x0), q.eval(x1));
        if q0 <= 0.0 && p0 > 0.0 {
            return Err(Error::InfiniteDivergence { at: x0 });
        }
        if q1 <= 0.0 && p1 > 0.0 {
            return Err(Error::InfiniteDivergence { at: x1 });
        }
        if q0 <= 0.0 && q1 <= 0.0 {
            // q is identically zero here, and so (by the checks above) is p.
            continue;
        }
        let eps = KL_TOLERANCE * (x1 - x0) / (b - a);
        total += adaptive_simpson(&integrand, x0, x1, eps);
    }
    Ok(total)
}

/// `KL(p || q) = ∫ p log(p / q)`, clamped below at zero.
pub fn kl_divergence(p: &Density, q: &Density) -> Result<f64> {
    Ok(kl_integral(&p.shape, &q.shape, 0.0, 1.0)?.max(0.0))
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, eps, KL_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}
