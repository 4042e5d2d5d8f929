//! Nonparametric classification under label shift and group-covariate shift.
//!
//! The crate models one-dimensional shift problems on `[0, 1]` whose densities
//! (and, for group shift, the regression function `P(y = 1 | x)`) are
//! continuous and piecewise linear. Everything downstream of that choice is
//! exact: integrals, total variation, risks and Bayes risks are computed in
//! closed form rather than by quadrature.
//!
//! Module map:
//!
//! - [`density`]: piecewise-linear functions, densities, the hat function,
//!   TV / KL / overlap, inverse-CDF sampling.
//! - [`instances`]: the hard instance families, generic instances, dataset
//!   draws and undersampling.
//! - [`estimators`]: undersampled / full / importance-weighted binning, the
//!   histogram plug-in rule and the posterior oracle over a hard family.
//! - [`risk`]: exact risk, Bayes risk, excess risk and the closed-form
//!   minimax lower bounds.
//! - [`harness`]: seeded parallel Monte Carlo experiments, rate fits and the
//!   deterministic lemma checks.

pub mod classifier;
pub mod density;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod instances;
pub mod risk;

pub use classifier::{Label, PiecewiseConstantClassifier};
pub use density::{Density, LipschitzCertificate, PiecewiseLinearFn};
pub use error::{Error, Result};
pub use estimators::{FamilyPosterior, HistogramDensityPair};
pub use harness::{ExperimentConfig, RateFit, TrialRecord};
pub use instances::{Dataset, GroupShiftIndex, LabelShiftIndex, Sample, ShiftInstance, ShiftKind};
pub use risk::{BoundCurve, RiskReport};
