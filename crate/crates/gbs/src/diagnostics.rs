//! Chain diagnostics: integrated autocorrelation time and replication
//! summaries.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};

/// Result of an integrated autocorrelation time estimate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AutocorrResult {
    /// Integrated autocorrelation time, clamped to at least one.
    pub tau: f64,
    /// Self-consistent truncation window that was used.
    pub window: usize,
    /// Effective sample size, `n_total / tau`.
    pub ess: f64,
    /// Set when the series had (numerically) zero variance; tau is then one
    /// by convention.
    pub zero_variance: bool,
}

const MIN_LEN_PER_CHAIN: usize = 50;
const SOKAL_C: f64 = 5.0;

/// Normalized autocorrelation function of one series, computed with FFTs and
/// the biased (divide by n) normalization that the windowing rule expects.
fn autocorr_fn(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut m = 1usize;
    while m < 2 * n {
        m <<= 1;
    }
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(m)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for v in buf.iter_mut() {
        *v = Complex::new(v.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let c0 = buf[0].re;
    if c0 <= 0.0 || !c0.is_finite() {
        return vec![];
    }
    buf[..n].iter().map(|v| v.re / c0).collect()
}

/// Integrated autocorrelation time of one or more chains of equal length.
///
/// The per-chain autocorrelation functions are averaged, then truncated at
/// the smallest window `W` satisfying `W >= 5 * tau(W)`, the usual
/// self-consistent rule. Multi-chain input sharpens the estimate without
/// mixing between-chain variance into it.
pub fn integrated_autocorr_time(chains: &[Vec<f64>]) -> Result<AutocorrResult> {
    if chains.is_empty() {
        return Err(Error::InvalidArgument("no chains given".into()));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument(
            "chains must share a common length".into(),
        ));
    }
    if n < MIN_LEN_PER_CHAIN {
        return Err(Error::InvalidArgument(format!(
            "series too short for autocorrelation estimate: {n} < {MIN_LEN_PER_CHAIN} \
             per chain; collect more iterations"
        )));
    }
    let n_total = n * chains.len();

    let mut rho = vec![0.0f64; n];
    let mut live_chains = 0usize;
    for chain in chains {
        let acf = autocorr_fn(chain);
        if acf.is_empty() {
            continue;
        }
        live_chains += 1;
        for (r, a) in rho.iter_mut().zip(&acf) {
            *r += a;
        }
    }
    if live_chains == 0 {
        // all chains constant
        return Ok(AutocorrResult {
            tau: 1.0,
            window: 0,
            ess: n_total as f64,
            zero_variance: true,
        });
    }
    for r in rho.iter_mut() {
        *r /= live_chains as f64;
    }

    let mut tau_w = 1.0;
    let mut window = n - 1;
    let mut cumulative = 0.0;
    for w in 1..n {
        cumulative += rho[w];
        tau_w = 1.0 + 2.0 * cumulative;
        if (w as f64) >= SOKAL_C * tau_w {
            window = w;
            break;
        }
    }
    let tau = tau_w.max(1.0);
    Ok(AutocorrResult {
        tau,
        window,
        ess: n_total as f64 / tau,
        zero_variance: false,
    })
}

/// Spread and calibration summary over replicated evidence estimates.
#[derive(Clone, Debug, Serialize)]
pub struct ReplicationSummary {
    pub n: usize,
    /// Quantiles of `ln_z - fiducial` at probabilities 5, 25, 50, 75, 95.
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
    /// Mean of the reported standard errors.
    pub mean_std_err: f64,
    /// Empirical standard deviation of `ln_z` across replications.
    pub empirical_std: f64,
    /// Fraction of replications with `|ln_z - fiducial| <= 2 std_err`.
    pub coverage_2se: f64,
}

/// Linearly interpolated quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Summarize replicated `(ln_z, std_err)` pairs against a reference value.
pub fn replication_summary(estimates: &[(f64, f64)], fiducial: f64) -> Result<ReplicationSummary> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no estimates to summarize".into()));
    }
    let mut errors: Vec<f64> = estimates.iter().map(|&(z, _)| z - fiducial).collect();
    errors.sort_by(|a, b| a.partial_cmp(b).expect("non-finite estimate"));
    let n = estimates.len();
    let mean_z = estimates.iter().map(|&(z, _)| z).sum::<f64>() / n as f64;
    let var = if n > 1 {
        estimates
            .iter()
            .map(|&(z, _)| (z - mean_z) * (z - mean_z))
            .sum::<f64>()
            / (n - 1) as f64
    } else {
        0.0
    };
    let covered = estimates
        .iter()
        .filter(|&&(z, se)| (z - fiducial).abs() <= 2.0 * se)
        .count();
    Ok(ReplicationSummary {
        n,
        q05: quantile_sorted(&errors, 0.05),
        q25: quantile_sorted(&errors, 0.25),
        q50: quantile_sorted(&errors, 0.50),
        q75: quantile_sorted(&errors, 0.75),
        q95: quantile_sorted(&errors, 0.95),
        mean_std_err: estimates.iter().map(|&(_, se)| se).sum::<f64>() / n as f64,
        empirical_std: var.sqrt(),
        coverage_2se: covered as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::StandardNormal;

    #[test]
    fn iid_series_has_tau_near_one() {
        let mut rng = rng_from_seed(1);
        let series: Vec<f64> = (0..100_000)
            .map(|_| rand::Rng::sample::<f64, _>(&mut rng, StandardNormal))
            .collect();
        let r = integrated_autocorr_time(&[series]).unwrap();
        assert!((r.tau - 1.0).abs() < 0.1, "tau = {}", r.tau);
        assert!(!r.zero_variance);
    }

    #[test]
    fn ar1_tau_matches_closed_form() {
        // AR(1) with coefficient rho has tau = (1 + rho) / (1 - rho) = 19
        let rho = 0.9f64;
        let mut rng = rng_from_seed(2);
        let n = 1_000_000usize;
        let mut series = Vec::with_capacity(n);
        let mut x = 0.0f64;
        let innov = (1.0 - rho * rho).sqrt();
        for _ in 0..n {
            let e: f64 = rand::Rng::sample(&mut rng, StandardNormal);
            x = rho * x + innov * e;
            series.push(x);
        }
        let r = integrated_autocorr_time(&[series]).unwrap();
        let expected = (1.0 + rho) / (1.0 - rho);
        assert!(
            (r.tau - expected).abs() / expected < 0.15,
            "tau = {}, expected {expected}",
            r.tau
        );
        assert!((r.ess * r.tau - n as f64).abs() < 1e-6 * n as f64);
    }

    #[test]
    fn constant_series_clamps_to_one_with_flag() {
        let series = vec![3.25; 500];
        let r = integrated_autocorr_time(&[series]).unwrap();
        assert_eq!(r.tau, 1.0);
        assert!(r.zero_variance);
        assert_eq!(r.ess, 500.0);
    }

    #[test]
    fn short_series_is_rejected_with_advice() {
        let err = integrated_autocorr_time(&[vec![0.0; 10]]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("50"), "message should state the minimum: {msg}");
    }

    #[test]
    fn doubling_the_series_is_consistent() {
        let rho = 0.8f64;
        let mut rng = rng_from_seed(3);
        let innov = (1.0 - rho * rho).sqrt();
        let mut x = 0.0f64;
        let series: Vec<f64> = (0..400_000)
            .map(|_| {
                let e: f64 = rand::Rng::sample(&mut rng, StandardNormal);
                x = rho * x + innov * e;
                x
            })
            .collect();
        let half = integrated_autocorr_time(&[series[..200_000].to_vec()]).unwrap();
        let full = integrated_autocorr_time(&[series]).unwrap();
        assert!(
            (half.tau - full.tau).abs() / full.tau < 0.10,
            "half {} vs full {}",
            half.tau,
            full.tau
        );
    }

    #[test]
    fn multi_chain_average_sharpen_estimate() {
        let rho = 0.9f64;
        let mut rng = rng_from_seed(4);
        let innov = (1.0 - rho * rho).sqrt();
        let chains: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                let mut x = 0.0f64;
                (0..50_000)
                    .map(|_| {
                        let e: f64 = rand::Rng::sample(&mut rng, StandardNormal);
                        x = rho * x + innov * e;
                        x
                    })
                    .collect()
            })
            .collect();
        let r = integrated_autocorr_time(&chains).unwrap();
        let expected = (1.0 + rho) / (1.0 - rho);
        assert!((r.tau - expected).abs() / expected < 0.15, "tau = {}", r.tau);
        assert!((r.ess - 8.0 * 50_000.0 / r.tau).abs() < 1e-9);
    }

    #[test]
    fn replication_summary_on_identical_estimates() {
        let reps = vec![(-10.0, 0.5); 16];
        let s = replication_summary(&reps, -10.0).unwrap();
        assert_eq!(s.q05, 0.0);
        assert_eq!(s.q50, 0.0);
        assert_eq!(s.q95, 0.0);
        assert_eq!(s.empirical_std, 0.0);
        assert_eq!(s.coverage_2se, 1.0);
        assert_eq!(s.mean_std_err, 0.5);
    }

    #[test]
    fn replication_summary_quantiles_on_synthetic_normals() {
        let mut rng = rng_from_seed(5);
        let reps: Vec<(f64, f64)> = (0..10_000)
            .map(|_| {
                let z: f64 = rand::Rng::sample(&mut rng, StandardNormal);
                (z, 1.0)
            })
            .collect();
        let s = replication_summary(&reps, 0.0).unwrap();
        assert!(s.q50.abs() < 0.05, "median {}", s.q50);
        let spread = s.q95 - s.q05;
        let expected = 2.0 * 1.6449;
        assert!(
            (spread - expected).abs() / expected < 0.10,
            "q95 - q05 = {spread}"
        );
        // 2 sigma coverage of a unit normal
        assert!((s.coverage_2se - 0.954).abs() < 0.02);
    }
}
