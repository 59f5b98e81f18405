//! Core trait for (unnormalized) log densities and the evaluation ledger.

use serde::{Deserialize, Serialize};

/// An unnormalized log density on `R^dim`.
///
/// `log_prob` returns `f64::NEG_INFINITY` outside the support. Implementations
/// must be deterministic: the same point always yields the same value.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Unnormalized log density at `x`, `-inf` outside the support.
    fn log_prob(&self, x: &[f64]) -> f64;

    /// Joint evaluation: writes the gradient into `grad` and returns the log
    /// density. When the return value is `-inf` the gradient contents are
    /// unspecified and must not be used.
    fn log_prob_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Axis-aligned region from which sampler chains draw their start points.
    fn init_region(&self) -> (Vec<f64>, Vec<f64>);

    /// Hard support walls for the trajectory integrator, when the support is
    /// exactly an axis-aligned box. A position that steps past a wall is then
    /// folded back inside with the matching momentum component negated, the
    /// specular treatment of a hard wall, instead of every wall contact being
    /// scored as a divergence.
    fn reflect_bounds(&self) -> Option<(&[f64], &[f64])> {
        None
    }
}

/// A target that factorizes as `flat prior on a box  x  likelihood`, with the
/// prior normalized to integrate to one over the box.
///
/// The posterior convention used everywhere in this crate is
/// `log_posterior(x) = log_likelihood(x) - log_prior_volume` inside the box,
/// so the normalizing constant of `log_posterior` is the evidence.
pub trait BoxPriorTarget: LogDensity {
    /// Lower and upper bounds of the prior box.
    fn bounds(&self) -> (&[f64], &[f64]);

    /// Log likelihood (without the prior term). Finite inside the box.
    fn log_likelihood(&self, x: &[f64]) -> f64;

    /// Joint likelihood value and gradient, mirroring [`LogDensity::log_prob_grad`].
    fn log_likelihood_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// `sum_i ln(hi_i - lo_i)` over the prior box.
    fn log_prior_volume(&self) -> f64 {
        let (lo, hi) = self.bounds();
        lo.iter().zip(hi).map(|(a, b)| (b - a).ln()).sum()
    }

    fn in_box(&self, x: &[f64]) -> bool {
        let (lo, hi) = self.bounds();
        x.iter()
            .zip(lo.iter().zip(hi))
            .all(|(&v, (&a, &b))| v >= a && v <= b)
    }
}

/// Counts of target evaluations, kept separately for plain likelihood calls
/// and for gradient calls. Every stage of a pipeline reports its own counts;
/// totals are the plain sum, nothing is double counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalLedger {
    pub likelihood: u64,
    pub gradient: u64,
}

impl EvalLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_likelihood(&mut self, n: u64) {
        self.likelihood += n;
    }

    pub fn add_gradient(&mut self, n: u64) {
        self.gradient += n;
    }

    pub fn merge(&mut self, other: &EvalLedger) {
        self.likelihood += other.likelihood;
        self.gradient += other.gradient;
    }

    pub fn total(&self) -> u64 {
        self.likelihood + self.gradient
    }
}

/// Power posterior `log pi(x) + beta * log L(x)` over a box-prior target.
///
/// `beta = 0` is the normalized flat prior, `beta = 1` the posterior itself.
pub struct TemperedTarget<'a, T: BoxPriorTarget + ?Sized> {
    base: &'a T,
    beta: f64,
}

impl<'a, T: BoxPriorTarget + ?Sized> TemperedTarget<'a, T> {
    pub fn new(base: &'a T, beta: f64) -> Self {
        assert!((0.0..=1.0).contains(&beta), "beta must lie in [0, 1]");
        Self { base, beta }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl<'a, T: BoxPriorTarget + ?Sized> LogDensity for TemperedTarget<'a, T> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn log_prob(&self, x: &[f64]) -> f64 {
        if !self.base.in_box(x) {
            return f64::NEG_INFINITY;
        }
        -self.base.log_prior_volume() + self.beta * self.base.log_likelihood(x)
    }

    fn log_prob_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        if !self.base.in_box(x) {
            return f64::NEG_INFINITY;
        }
        let ll = self.base.log_likelihood_grad(x, grad);
        for g in grad.iter_mut() {
            *g *= self.beta;
        }
        -self.base.log_prior_volume() + self.beta * ll
    }

    fn init_region(&self) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.base.bounds();
        (lo.to_vec(), hi.to_vec())
    }

    fn reflect_bounds(&self) -> Option<(&[f64], &[f64])> {
        Some(self.base.bounds())
    }
}
