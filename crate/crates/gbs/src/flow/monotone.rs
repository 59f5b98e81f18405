//! Monotone one-dimensional maps fitted from samples.
//!
//! Each map sends an empirical marginal to an approximately standard normal
//! one: a kernel-smoothed CDF is evaluated at quantile knots, pushed through
//! the normal inverse CDF, and interpolated with a monotone cubic spline.
//! Outside the knot range the map continues linearly, so log derivatives
//! stay bounded and the map is invertible on all of R.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Standard normal CDF via the Zelen and Severo rational approximation.
/// Absolute error below 1e-7, which is far finer than the sampling noise in
/// any empirical CDF this gets applied to, at a fraction of the cost of erfc.
pub(crate) fn fast_normal_cdf(x: f64) -> f64 {
    if x < -8.0 {
        return 0.0;
    }
    if x > 8.0 {
        return 1.0;
    }
    let t = 1.0 / (1.0 + 0.231_641_9 * x.abs());
    let poly = t
        * (0.319_381_530
            + t * (-0.356_563_782
                + t * (1.781_477_937 + t * (-1.821_255_978 + t * 1.330_274_429))));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let tail = pdf * poly;
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Piecewise cubic monotone map with linear tails.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct MonotoneMap1D {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
    slope_floor: f64,
}

/// Linearly interpolated quantile of an already sorted slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Kernel-smoothed empirical CDF at `t`, over sorted data with bandwidth `h`.
/// Contributions outside eight bandwidths are rounded to zero or one.
fn smoothed_cdf(sorted: &[f64], t: f64, h: f64) -> f64 {
    let n = sorted.len();
    let lo = sorted.partition_point(|&v| v < t - 8.0 * h);
    let hi = sorted.partition_point(|&v| v <= t + 8.0 * h);
    let mut acc = lo as f64;
    for &v in &sorted[lo..hi] {
        acc += fast_normal_cdf((t - v) / h);
    }
    acc / n as f64
}

impl MonotoneMap1D {
    /// Fit from raw coordinate values.
    pub fn fit(
        values: &[f64],
        n_knots: usize,
        bandwidth_factor: f64,
        slope_floor: f64,
    ) -> Result<Self> {
        let n = values.len();
        if n < 8 {
            return Err(Error::DegenerateSamples(format!(
                "{n} values are too few to fit a marginal map"
            )));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample value"));
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        let span = sorted[n - 1] - sorted[0];
        if !(std.is_finite() && std > 1e-12 * (1.0 + mean.abs())) || span <= 0.0 {
            return Err(Error::DegenerateSamples(
                "zero spread in marginal values".into(),
            ));
        }
        let h = bandwidth_factor * std * (n as f64).powf(-0.2);

        // quantile knots, deduplicated to keep strict monotonicity
        let k = n_knots.max(8);
        let min_gap = 1e-9 * span.max(1.0);
        let mut xs: Vec<f64> = Vec::with_capacity(k);
        for i in 0..k {
            let q = quantile_sorted(&sorted, (i as f64 + 0.5) / k as f64);
            if xs.last().map_or(true, |&last| q > last + min_gap) {
                xs.push(q);
            }
        }
        if xs.len() < 4 {
            return Err(Error::DegenerateSamples(
                "marginal collapses to fewer than four distinct knots".into(),
            ));
        }

        let normal = Normal::standard();
        let mut kx = Vec::with_capacity(xs.len());
        let mut ys = Vec::with_capacity(xs.len());
        for &x in &xs {
            let f = smoothed_cdf(&sorted, x, h).clamp(1e-13, 1.0 - 1e-13);
            let y = normal.inverse_cdf(f);
            if ys.last().map_or(true, |&last: &f64| y > last + 1e-12) {
                kx.push(x);
                ys.push(y);
            }
        }
        if ys.len() < 4 {
            return Err(Error::DegenerateSamples(
                "smoothed CDF is flat across the knot range".into(),
            ));
        }

        let slopes = pchip_slopes(&kx, &ys, slope_floor);
        Ok(Self {
            xs: kx,
            ys,
            slopes,
            slope_floor,
        })
    }

    /// Build a map that is linear on all of R. Used by tests and as the
    /// degenerate single-knot fallback.
    #[allow(dead_code)]
    pub fn linear(scale: f64, offset: f64) -> Self {
        assert!(scale > 0.0);
        Self {
            xs: vec![-1.0, 1.0],
            ys: vec![offset - scale, offset + scale],
            slopes: vec![scale, scale],
            slope_floor: 1e-6,
        }
    }

    fn interval(&self, u: f64) -> usize {
        // index k with xs[k] <= u < xs[k+1]
        let k = self.xs.partition_point(|&x| x <= u);
        k.saturating_sub(1).min(self.xs.len() - 2)
    }

    pub fn forward(&self, u: f64) -> f64 {
        self.forward_with_deriv(u).0
    }

    /// Map value and derivative at `u`. The derivative is floored so its
    /// logarithm stays finite.
    pub fn forward_with_deriv(&self, u: f64) -> (f64, f64) {
        let m = self.xs.len();
        if u <= self.xs[0] {
            let d = self.slopes[0].max(self.slope_floor);
            return (self.ys[0] + d * (u - self.xs[0]), d);
        }
        if u >= self.xs[m - 1] {
            let d = self.slopes[m - 1].max(self.slope_floor);
            return (self.ys[m - 1] + d * (u - self.xs[m - 1]), d);
        }
        let k = self.interval(u);
        let h = self.xs[k + 1] - self.xs[k];
        let t = (u - self.xs[k]) / h;
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (d0, d1) = (self.slopes[k], self.slopes[k + 1]);
        let omt = 1.0 - t;
        let val = y0 * (1.0 + 2.0 * t) * omt * omt
            + h * d0 * t * omt * omt
            + y1 * t * t * (3.0 - 2.0 * t)
            + h * d1 * t * t * (t - 1.0);
        let deriv = 6.0 * t * omt * (y1 - y0) / h
            + d0 * omt * (1.0 - 3.0 * t)
            + d1 * t * (3.0 * t - 2.0);
        (val, deriv.max(self.slope_floor))
    }

    pub fn inverse(&self, z: f64) -> f64 {
        let m = self.xs.len();
        if z <= self.ys[0] {
            let d = self.slopes[0].max(self.slope_floor);
            return self.xs[0] + (z - self.ys[0]) / d;
        }
        if z >= self.ys[m - 1] {
            let d = self.slopes[m - 1].max(self.slope_floor);
            return self.xs[m - 1] + (z - self.ys[m - 1]) / d;
        }
        let k = {
            let k = self.ys.partition_point(|&y| y <= z);
            k.saturating_sub(1).min(m - 2)
        };
        // safeguarded Newton on the bracketing interval
        let (mut lo, mut hi) = (self.xs[k], self.xs[k + 1]);
        let mut u = {
            let span = self.ys[k + 1] - self.ys[k];
            lo + (z - self.ys[k]) / span * (hi - lo)
        };
        for _ in 0..64 {
            let (val, deriv) = self.forward_with_deriv(u);
            let err = val - z;
            if err.abs() <= 1e-13 * (1.0 + z.abs()) {
                return u;
            }
            if err > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let newton = u - err / deriv;
            u = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-15 * (1.0 + u.abs()) {
                break;
            }
        }
        u
    }
}

/// Fritsch–Carlson slopes for strictly increasing data; guarantees a
/// monotone interpolant. Every slope is floored to keep the map invertible.
fn pchip_slopes(xs: &[f64], ys: &[f64], floor: f64) -> Vec<f64> {
    let m = xs.len();
    let hs: Vec<f64> = (0..m - 1).map(|i| xs[i + 1] - xs[i]).collect();
    let deltas: Vec<f64> = (0..m - 1).map(|i| (ys[i + 1] - ys[i]) / hs[i]).collect();
    let mut d = vec![0.0; m];
    d[0] = endpoint_slope(hs[0], hs[1], deltas[0], deltas[1]);
    d[m - 1] = endpoint_slope(
        hs[m - 2],
        hs[m - 3],
        deltas[m - 2],
        deltas[m - 3],
    );
    for i in 1..m - 1 {
        let (d_prev, d_next) = (deltas[i - 1], deltas[i]);
        if d_prev <= 0.0 || d_next <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * hs[i] + hs[i - 1];
            let w2 = hs[i] + 2.0 * hs[i - 1];
            d[i] = (w1 + w2) / (w1 / d_prev + w2 / d_next);
        }
    }
    for s in d.iter_mut() {
        *s = s.max(floor);
    }
    d
}

fn endpoint_slope(h0: f64, h1: f64, delta0: f64, delta1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * delta0 - h0 * delta1) / (h0 + h1);
    if d * delta0 <= 0.0 {
        0.0
    } else if delta1 * delta0 < 0.0 && d.abs() > 3.0 * delta0.abs() {
        3.0 * delta0
    } else {
        d.min(3.0 * delta0.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    #[test]
    fn fast_cdf_matches_reference() {
        let normal = Normal::standard();
        for i in -80..=80 {
            let x = i as f64 / 10.0;
            let got = fast_normal_cdf(x);
            let want = normal.cdf(x);
            assert!((got - want).abs() < 1e-6, "x = {x}: {got} vs {want}");
        }
    }

    #[test]
    fn gaussian_samples_give_near_identity_map() {
        let mut rng = rng_from_seed(10);
        let values: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        let map = MonotoneMap1D::fit(&values, 64, 1.0, 1e-6).unwrap();
        for u in [-1.5, -0.5, 0.0, 0.7, 1.8] {
            let z = map.forward(u);
            assert!((z - u).abs() < 0.06, "forward({u}) = {z}");
        }
    }

    #[test]
    fn round_trips_are_tight() {
        let mut rng = rng_from_seed(11);
        let values: Vec<f64> = (0..5_000)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * z * z // skewed, heavy tailed
            })
            .collect();
        let map = MonotoneMap1D::fit(&values, 64, 1.0, 1e-6).unwrap();
        for i in 0..500 {
            let u = -12.0 + 24.0 * i as f64 / 499.0;
            let z = map.forward(u);
            let back = map.inverse(z);
            assert!((back - u).abs() < 1e-8, "round trip {u} -> {z} -> {back}");
        }
        for i in 0..200 {
            let z = -5.0 + 10.0 * i as f64 / 199.0;
            let u = map.inverse(z);
            let fwd = map.forward(u);
            assert!((fwd - z).abs() < 1e-8, "inverse round trip at {z}");
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = rng_from_seed(12);
        let values: Vec<f64> = (0..4_000)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0 + 1.0)
            .collect();
        let map = MonotoneMap1D::fit(&values, 64, 1.0, 1e-6).unwrap();
        for i in 0..100 {
            let u = -5.0 + 12.0 * i as f64 / 99.0;
            let (_, d) = map.forward_with_deriv(u);
            let h = 1e-6;
            let fd = (map.forward(u + h) - map.forward(u - h)) / (2.0 * h);
            assert!(
                (d - fd).abs() < 1e-4 * d.abs().max(fd.abs()) + 1e-9,
                "deriv at {u}: analytic {d}, fd {fd}"
            );
        }
    }

    #[test]
    fn monotone_on_dense_grid() {
        let mut rng = rng_from_seed(13);
        // bimodal values stress the spline
        let values: Vec<f64> = (0..6_000)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                if rng.random::<bool>() {
                    z + 4.0
                } else {
                    z - 4.0
                }
            })
            .collect();
        let map = MonotoneMap1D::fit(&values, 64, 1.0, 1e-6).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..5_000 {
            let u = -10.0 + 20.0 * i as f64 / 4_999.0;
            let z = map.forward(u);
            assert!(z > prev, "monotonicity violated at {u}");
            prev = z;
        }
    }

    #[test]
    fn degenerate_values_are_rejected() {
        let values = vec![2.5; 100];
        assert!(MonotoneMap1D::fit(&values, 64, 1.0, 1e-6).is_err());
    }

    #[test]
    fn linear_map_is_reproduced() {
        let map = MonotoneMap1D::linear(2.0, 0.0);
        for u in [-3.0, -0.1, 0.0, 5.0] {
            let (v, d) = map.forward_with_deriv(u);
            assert!((v - 2.0 * u).abs() <= 1e-13 * (1.0 + u.abs()));
            assert!((d - 2.0).abs() <= 1e-12);
            assert!((map.inverse(v) - u).abs() <= 1e-11 * (1.0 + u.abs()));
        }
    }
}
