//! Benchmark target distributions.
//!
//! Every target factorizes as a flat prior over an axis-aligned box times a
//! likelihood, and the reported log posterior is
//!
//! ```text
//! log_posterior(x) = log_likelihood(x) - log(prior volume)   inside the box
//! log_posterior(x) = -inf                                    outside
//! ```
//!
//! so the normalizing constant of `exp(log_posterior)` is the Bayesian
//! evidence. Four families are provided:
//!
//! * **Funnel**: `N(x1 | 0, a^2)` times per-coordinate normals whose standard
//!   deviation is `exp(2 b x1)`, a strongly scale-coupled density whose width
//!   varies by orders of magnitude along x1.
//! * **Banana**: pairs `(y1, y2)` with log likelihood
//!   `-(y1^2 - y2)^2 / q - (y1 - 1)^2` evaluated in rotated coordinates
//!   `y = A x` for a fixed rotation `A`, giving thin curved ridges that are
//!   not axis aligned.
//! * **Cauchy mixture**: per-coordinate even mixture of two Cauchy peaks at
//!   `+/- mu`, heavy tailed and multimodal in every coordinate.
//! * **Ring**: log likelihood `-sum ((x_i^2 + x_{i+1}^2 - a)^2 / b)^2` with
//!   cyclic wraparound, concentrating mass near a coupled ring surface.
//!
//! The standard instances with their reference evidence values are
//! `funnel16`, `banana32`, `cauchy48` and `ring64`.

use ndarray::Array2;
use serde::Serialize;

use crate::density::{BoxPriorTarget, LogDensity};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::rng_from_seed;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Seed for the fixed rotation baked into the standard banana target.
const BANANA_ROTATION_SEED: u64 = 24_601;

#[derive(Clone, Debug)]
enum Kind {
    Funnel { a: f64, b: f64 },
    Banana { q: f64, rotation: Array2<f64> },
    CauchyMixture { mu: f64, sigma: f64 },
    Ring { a: f64, b: f64 },
}

/// A benchmark posterior with a flat box prior and known reference evidence.
#[derive(Clone, Debug)]
pub struct TargetDistribution {
    kind: Kind,
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    fiducial: Option<f64>,
}

/// JSON-friendly description of a target, including the rotation rows for the
/// banana family so a run can be reproduced from its config alone.
#[derive(Debug, Serialize)]
pub struct TargetDescriptor {
    pub name: String,
    pub dim: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub fiducial_ln_z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<Vec<f64>>>,
}

impl TargetDistribution {
    /// Funnel with `x1 ~ U(-4, 4)` and the remaining coordinates `U(-30, 30)`.
    pub fn funnel(dim: usize) -> Self {
        assert!(dim >= 2, "funnel needs at least two dimensions");
        let mut lo = vec![-30.0; dim];
        let mut hi = vec![30.0; dim];
        lo[0] = -4.0;
        hi[0] = 4.0;
        let fiducial = (dim == 16).then_some(-63.4988);
        Self {
            kind: Kind::Funnel { a: 1.0, b: 0.5 },
            dim,
            lo,
            hi,
            fiducial,
        }
    }

    /// Banana with the built-in fixed rotation and prior box `U(-15, 15)^dim`.
    pub fn banana(dim: usize) -> Self {
        let mut rng = rng_from_seed(BANANA_ROTATION_SEED);
        let rotation = linalg::random_rotation(dim, &mut rng);
        Self::banana_with_rotation(dim, rotation).expect("built-in rotation is valid")
    }

    /// Banana with a caller-supplied rotation, validated to be in SO(dim).
    pub fn banana_with_rotation(dim: usize, rotation: Array2<f64>) -> Result<Self> {
        assert!(dim >= 2 && dim % 2 == 0, "banana dimension must be even");
        if rotation.dim() != (dim, dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: rotation.nrows(),
            });
        }
        let prod = rotation.dot(&rotation.t());
        for i in 0..dim {
            for j in 0..dim {
                let want = if i == j { 1.0 } else { 0.0 };
                if (prod[(i, j)] - want).abs() > 1e-8 {
                    return Err(Error::InvalidArgument(
                        "banana rotation is not orthogonal".into(),
                    ));
                }
            }
        }
        let fiducial = (dim == 32).then_some(-127.364);
        Ok(Self {
            kind: Kind::Banana { q: 0.01, rotation },
            dim,
            lo: vec![-15.0; dim],
            hi: vec![15.0; dim],
            fiducial,
        })
    }

    /// Per-coordinate mixture `(Cauchy(mu, 1) + Cauchy(-mu, 1)) / 2` with
    /// `mu = 5` and prior box `U(-100, 100)^dim`.
    pub fn cauchy(dim: usize) -> Self {
        let fiducial = (dim == 48).then_some(-254.627);
        Self {
            kind: Kind::CauchyMixture { mu: 5.0, sigma: 1.0 },
            dim,
            lo: vec![-100.0; dim],
            hi: vec![100.0; dim],
            fiducial,
        }
    }

    /// Cyclically coupled ring with `a = 2`, `b = 1` and prior `U(-5, 5)^dim`.
    pub fn ring(dim: usize) -> Self {
        assert!(dim >= 3, "ring needs at least three dimensions");
        let fiducial = (dim == 64).then_some(-114.492);
        Self {
            kind: Kind::Ring { a: 2.0, b: 1.0 },
            dim,
            lo: vec![-5.0; dim],
            hi: vec![5.0; dim],
            fiducial,
        }
    }

    /// Look up one of the standard instances by its CLI name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "funnel16" => Ok(Self::funnel(16)),
            "banana32" => Ok(Self::banana(32)),
            "cauchy48" => Ok(Self::cauchy(48)),
            "ring64" => Ok(Self::ring(64)),
            other => Err(Error::InvalidArgument(format!(
                "unknown target '{other}' (known: funnel16, banana32, cauchy48, ring64)"
            ))),
        }
    }

    /// Names of the standard instances, in presentation order.
    pub fn standard_names() -> [&'static str; 4] {
        ["funnel16", "banana32", "cauchy48", "ring64"]
    }

    /// Family name without the dimension suffix.
    pub fn family(&self) -> &'static str {
        match self.kind {
            Kind::Funnel { .. } => "funnel",
            Kind::Banana { .. } => "banana",
            Kind::CauchyMixture { .. } => "cauchy",
            Kind::Ring { .. } => "ring",
        }
    }

    pub fn name(&self) -> String {
        format!("{}{}", self.family(), self.dim)
    }

    /// Reference evidence value, available for the standard instances.
    pub fn fiducial_ln_z(&self) -> Option<f64> {
        self.fiducial
    }

    pub fn descriptor(&self) -> TargetDescriptor {
        let rotation = match &self.kind {
            Kind::Banana { rotation, .. } => Some(
                rotation
                    .outer_iter()
                    .map(|row| row.to_vec())
                    .collect::<Vec<_>>(),
            ),
            _ => None,
        };
        TargetDescriptor {
            name: self.name(),
            dim: self.dim,
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            fiducial_ln_z: self.fiducial,
            rotation,
        }
    }

    /// Log posterior under the box-prior convention; `-inf` outside the box.
    pub fn log_posterior(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.log_prob(x))
    }

    /// Gradient of the log posterior. Unlike [`Self::log_posterior`], points
    /// outside the prior box are an error here: the sentinel value has no
    /// meaningful gradient.
    pub fn grad_log_posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if let Some(index) = self.first_out_of_box(x) {
            return Err(Error::OutsideSupport {
                index,
                value: x[index],
            });
        }
        let mut grad = vec![0.0; self.dim];
        self.ln_like_grad(x, &mut grad);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { point: x.to_vec() });
        }
        Ok(grad)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn first_out_of_box(&self, x: &[f64]) -> Option<usize> {
        x.iter()
            .enumerate()
            .find(|&(i, &v)| v < self.lo[i] || v > self.hi[i])
            .map(|(i, _)| i)
    }

    fn ln_like(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Funnel { a, b } => {
                let x1 = x[0];
                let inv_var = (-4.0 * b * x1).exp();
                let mut sum_sq = 0.0;
                for &xi in &x[1..] {
                    sum_sq += xi * xi;
                }
                let k = (x.len() - 1) as f64;
                -0.5 * (x.len() as f64) * LN_2PI
                    - a.ln()
                    - 0.5 * x1 * x1 / (a * a)
                    - 2.0 * k * b * x1
                    - 0.5 * sum_sq * inv_var
            }
            Kind::Banana { q, rotation } => {
                let d = x.len();
                let mut ll = 0.0;
                let mut pair = [0.0f64; 2];
                for i in (0..d).step_by(2) {
                    for (slot, row) in pair.iter_mut().zip(i..i + 2) {
                        let mut acc = 0.0;
                        for (j, &xj) in x.iter().enumerate() {
                            acc += rotation[(row, j)] * xj;
                        }
                        *slot = acc;
                    }
                    let (y1, y2) = (pair[0], pair[1]);
                    let c = y1 * y1 - y2;
                    ll -= c * c / q + (y1 - 1.0) * (y1 - 1.0);
                }
                ll
            }
            Kind::CauchyMixture { mu, sigma } => {
                let mut ll = 0.0;
                for &xi in x {
                    ll += ln_cauchy_pair(xi, *mu, *sigma);
                }
                ll
            }
            Kind::Ring { a, b } => {
                let d = x.len();
                let mut ll = 0.0;
                for i in 0..d {
                    let xn = x[(i + 1) % d];
                    let u = x[i] * x[i] + xn * xn - a;
                    ll -= u * u / b;
                }
                ll
            }
        }
    }

    fn ln_like_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match &self.kind {
            Kind::Funnel { a, b } => {
                let x1 = x[0];
                let inv_var = (-4.0 * b * x1).exp();
                let k = (x.len() - 1) as f64;
                let mut sum_sq = 0.0;
                for (g, &xi) in grad[1..].iter_mut().zip(&x[1..]) {
                    sum_sq += xi * xi;
                    *g = -xi * inv_var;
                }
                grad[0] = -x1 / (a * a) - 2.0 * k * b + 2.0 * b * sum_sq * inv_var;
                -0.5 * (x.len() as f64) * LN_2PI
                    - a.ln()
                    - 0.5 * x1 * x1 / (a * a)
                    - 2.0 * k * b * x1
                    - 0.5 * sum_sq * inv_var
            }
            Kind::Banana { q, rotation } => {
                let d = x.len();
                let mut y = vec![0.0; d];
                for (i, yi) in y.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, &xj) in x.iter().enumerate() {
                        acc += rotation[(i, j)] * xj;
                    }
                    *yi = acc;
                }
                let mut gy = vec![0.0; d];
                let mut ll = 0.0;
                for i in (0..d).step_by(2) {
                    let (y1, y2) = (y[i], y[i + 1]);
                    let c = y1 * y1 - y2;
                    ll -= c * c / q + (y1 - 1.0) * (y1 - 1.0);
                    gy[i] = -4.0 * y1 * c / q - 2.0 * (y1 - 1.0);
                    gy[i + 1] = 2.0 * c / q;
                }
                for (j, g) in grad.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (i, &gyi) in gy.iter().enumerate() {
                        acc += rotation[(i, j)] * gyi;
                    }
                    *g = acc;
                }
                ll
            }
            Kind::CauchyMixture { mu, sigma } => {
                let mut ll = 0.0;
                for (g, &xi) in grad.iter_mut().zip(x) {
                    let (v, dv) = ln_cauchy_pair_grad(xi, *mu, *sigma);
                    ll += v;
                    *g = dv;
                }
                ll
            }
            Kind::Ring { a, b } => {
                let d = x.len();
                let mut ll = 0.0;
                for g in grad.iter_mut() {
                    *g = 0.0;
                }
                for i in 0..d {
                    let j = (i + 1) % d;
                    let u = x[i] * x[i] + x[j] * x[j] - a;
                    ll -= u * u / b;
                    let du = -2.0 * u / b;
                    grad[i] += du * 2.0 * x[i];
                    grad[j] += du * 2.0 * x[j];
                }
                ll
            }
        }
    }
}

fn ln_cauchy_pair(x: f64, mu: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let dp = x - mu;
    let dm = x + mu;
    let cp = sigma / (std::f64::consts::PI * (s2 + dp * dp));
    let cm = sigma / (std::f64::consts::PI * (s2 + dm * dm));
    (0.5 * (cp + cm)).ln()
}

fn ln_cauchy_pair_grad(x: f64, mu: f64, sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let dp = x - mu;
    let dm = x + mu;
    let denom_p = s2 + dp * dp;
    let denom_m = s2 + dm * dm;
    let cp = sigma / (std::f64::consts::PI * denom_p);
    let cm = sigma / (std::f64::consts::PI * denom_m);
    let mix = 0.5 * (cp + cm);
    let dmix = 0.5 * (-2.0 * dp / denom_p * cp - 2.0 * dm / denom_m * cm);
    (mix.ln(), dmix / mix)
}

impl LogDensity for TargetDistribution {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_prob(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        if self.first_out_of_box(x).is_some() {
            return f64::NEG_INFINITY;
        }
        self.ln_like(x) - self.log_prior_volume()
    }

    fn log_prob_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        if self.first_out_of_box(x).is_some() {
            return f64::NEG_INFINITY;
        }
        self.ln_like_grad(x, grad) - self.log_prior_volume()
    }

    /// Central part of the box rather than all of it: start points drawn
    /// from the full prior of a high-dimensional target are so far into the
    /// likelihood tails that chains spend their whole warm-up drifting back.
    fn init_region(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.lo.iter().map(|&a| a.max(-2.0)).collect();
        let hi = self.hi.iter().map(|&b| b.min(2.0)).collect();
        (lo, hi)
    }

    fn reflect_bounds(&self) -> Option<(&[f64], &[f64])> {
        Some((&self.lo, &self.hi))
    }
}

impl BoxPriorTarget for TargetDistribution {
    fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    fn log_likelihood(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.ln_like(x)
    }

    fn log_likelihood_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.ln_like_grad(x, grad)
    }
}

pub mod synthetic {
    //! Small analytic targets used by the test suites. Their normalizing
    //! constants are known in closed form, which makes them useful oracles
    //! for samplers, flows and estimators alike.

    use statrs::distribution::{ContinuousCDF, Normal};

    use super::LN_2PI;
    use crate::density::{BoxPriorTarget, LogDensity};
    use ndarray::Array2;

    /// Unnormalized standard Gaussian `exp(-|x|^2 / 2)`; `ln Z = dim/2 ln 2pi`.
    pub struct StandardGaussian {
        pub dim: usize,
    }

    impl StandardGaussian {
        pub fn ln_z(&self) -> f64 {
            0.5 * self.dim as f64 * LN_2PI
        }
    }

    impl LogDensity for StandardGaussian {
        fn dim(&self) -> usize {
            self.dim
        }

        fn log_prob(&self, x: &[f64]) -> f64 {
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        }

        fn log_prob_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let mut s = 0.0;
            for (g, &xi) in grad.iter_mut().zip(x) {
                s += xi * xi;
                *g = -xi;
            }
            -0.5 * s
        }

        fn init_region(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![-2.0; self.dim], vec![2.0; self.dim])
        }
    }

    /// Unnormalized zero-mean Gaussian with a given covariance;
    /// `ln Z = dim/2 ln 2pi + 1/2 ln det cov`.
    pub struct CorrelatedGaussian {
        precision: Array2<f64>,
        ln_z: f64,
        dim: usize,
    }

    impl CorrelatedGaussian {
        pub fn new(cov: Array2<f64>) -> Self {
            let dim = cov.nrows();
            let l = crate::linalg::cholesky_lower(&cov).expect("covariance must be SPD");
            let ln_det: f64 = (0..dim).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
            let na = nalgebra::DMatrix::from_fn(dim, dim, |i, j| cov[(i, j)]);
            let prec = na.try_inverse().expect("SPD matrix is invertible");
            let precision = Array2::from_shape_fn((dim, dim), |(i, j)| prec[(i, j)]);
            Self {
                precision,
                ln_z: 0.5 * dim as f64 * LN_2PI + 0.5 * ln_det,
                dim,
            }
        }

        pub fn ln_z(&self) -> f64 {
            self.ln_z
        }
    }

    impl LogDensity for CorrelatedGaussian {
        fn dim(&self) -> usize {
            self.dim
        }

        fn log_prob(&self, x: &[f64]) -> f64 {
            let mut q = 0.0;
            for i in 0..self.dim {
                for j in 0..self.dim {
                    q += x[i] * self.precision[(i, j)] * x[j];
                }
            }
            -0.5 * q
        }

        fn log_prob_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let mut q = 0.0;
            for i in 0..self.dim {
                let mut row = 0.0;
                for j in 0..self.dim {
                    row += self.precision[(i, j)] * x[j];
                }
                q += x[i] * row;
                grad[i] = -row;
            }
            -0.5 * q
        }

        fn init_region(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![-2.0; self.dim], vec![2.0; self.dim])
        }
    }

    /// Box-prior target with likelihood identically one. Its evidence is
    /// exactly one, which makes it a sharp oracle for annealing identities.
    pub struct UniformBox {
        pub lo: Vec<f64>,
        pub hi: Vec<f64>,
    }

    impl LogDensity for UniformBox {
        fn dim(&self) -> usize {
            self.lo.len()
        }

        fn log_prob(&self, x: &[f64]) -> f64 {
            if !self.in_box(x) {
                return f64::NEG_INFINITY;
            }
            -self.log_prior_volume()
        }

        fn log_prob_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            if !self.in_box(x) {
                return f64::NEG_INFINITY;
            }
            for g in grad.iter_mut() {
                *g = 0.0;
            }
            -self.log_prior_volume()
        }

        fn init_region(&self) -> (Vec<f64>, Vec<f64>) {
            (self.lo.clone(), self.hi.clone())
        }

        fn reflect_bounds(&self) -> Option<(&[f64], &[f64])> {
            Some((&self.lo, &self.hi))
        }
    }

    impl BoxPriorTarget for UniformBox {
        fn bounds(&self) -> (&[f64], &[f64]) {
            (&self.lo, &self.hi)
        }

        fn log_likelihood(&self, _x: &[f64]) -> f64 {
            0.0
        }

        fn log_likelihood_grad(&self, _x: &[f64], grad: &mut [f64]) -> f64 {
            for g in grad.iter_mut() {
                *g = 0.0;
            }
            0.0
        }
    }

    /// One-dimensional Gaussian likelihood `exp(-x^2 / (2 sigma^2))` under a
    /// flat prior on `[lo, hi]`, with the evidence known in closed form.
    pub struct GaussianBump1D {
        pub sigma: f64,
        pub lo: f64,
        pub hi: f64,
    }

    impl GaussianBump1D {
        pub fn ln_z(&self) -> f64 {
            let n = Normal::new(0.0, self.sigma).unwrap();
            let mass = n.cdf(self.hi) - n.cdf(self.lo);
            (self.sigma * (2.0 * std::f64::consts::PI).sqrt() * mass).ln() - (self.hi - self.lo).ln()
        }
    }

    impl LogDensity for GaussianBump1D {
        fn dim(&self) -> usize {
            1
        }

        fn log_prob(&self, x: &[f64]) -> f64 {
            if !self.in_box(x) {
                return f64::NEG_INFINITY;
            }
            self.log_likelihood(x) - self.log_prior_volume()
        }

        fn log_prob_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            if !self.in_box(x) {
                return f64::NEG_INFINITY;
            }
            grad[0] = -x[0] / (self.sigma * self.sigma);
            self.log_likelihood(x) - self.log_prior_volume()
        }

        fn init_region(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![self.lo], vec![self.hi])
        }

        fn reflect_bounds(&self) -> Option<(&[f64], &[f64])> {
            Some((std::slice::from_ref(&self.lo), std::slice::from_ref(&self.hi)))
        }
    }

    impl BoxPriorTarget for GaussianBump1D {
        fn bounds(&self) -> (&[f64], &[f64]) {
            (std::slice::from_ref(&self.lo), std::slice::from_ref(&self.hi))
        }

        fn log_likelihood(&self, x: &[f64]) -> f64 {
            -0.5 * x[0] * x[0] / (self.sigma * self.sigma)
        }

        fn log_likelihood_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            grad[0] = -x[0] / (self.sigma * self.sigma);
            self.log_likelihood(x)
        }
    }
}
