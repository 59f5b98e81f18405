//! Optimal bridge score equation, its error model, and the classic
//! importance sampling and harmonic mean estimators.

use crate::error::{Error, Result};

/// Logistic sigmoid, stable over the whole extended real line.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log of the mean of exp over a slice.
pub(crate) fn logmeanexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + (sum / values.len() as f64).ln()
}

/// Inputs for a single bridge solve. Slices are log densities of the target
/// (`ln_p_*`, unnormalized) and the auxiliary distribution (`ln_q_*`,
/// normalized) evaluated on the posterior draws (`*_p`) and the auxiliary
/// draws (`*_q`).
#[derive(Clone, Copy, Debug)]
pub struct BridgeInputs<'a> {
    pub ln_p_p: &'a [f64],
    pub ln_q_p: &'a [f64],
    pub ln_p_q: &'a [f64],
    pub ln_q_q: &'a [f64],
}

impl<'a> BridgeInputs<'a> {
    pub fn n_p(&self) -> usize {
        self.ln_p_p.len()
    }

    pub fn n_q(&self) -> usize {
        self.ln_p_q.len()
    }

    fn validate(&self) -> Result<()> {
        if self.ln_p_p.len() != self.ln_q_p.len() || self.ln_p_q.len() != self.ln_q_q.len() {
            return Err(Error::InvalidArgument(
                "log density slices have mismatched lengths".into(),
            ));
        }
        if self.ln_p_p.is_empty() || self.ln_p_q.is_empty() {
            return Err(Error::InvalidArgument(
                "bridge needs draws from both distributions".into(),
            ));
        }
        let finite = |s: &[f64]| s.iter().all(|v| v.is_finite());
        if !finite(self.ln_q_p) || !finite(self.ln_q_q) {
            return Err(Error::DegenerateSamples(
                "auxiliary log density is not finite on a draw".into(),
            ));
        }
        if !finite(self.ln_p_p) {
            return Err(Error::DegenerateSamples(
                "target log density is not finite on a posterior draw".into(),
            ));
        }
        // target density may be zero at auxiliary draws, but not NaN
        if self.ln_p_q.iter().any(|v| v.is_nan()) {
            return Err(Error::DegenerateSamples(
                "target log density is NaN on an auxiliary draw".into(),
            ));
        }
        Ok(())
    }
}

/// Score whose root in `t = ln r` is the bridge estimate. Non-decreasing
/// in `t`.
pub(crate) fn bridge_score(inputs: &BridgeInputs, t: f64) -> f64 {
    let s = (inputs.n_q() as f64 / inputs.n_p() as f64).ln();
    let from_p: f64 = inputs
        .ln_p_p
        .iter()
        .zip(inputs.ln_q_p)
        .map(|(lp, lq)| sigmoid(s + t + lq - lp))
        .sum();
    let from_q: f64 = inputs
        .ln_p_q
        .iter()
        .zip(inputs.ln_q_q)
        .map(|(lp, lq)| sigmoid(lp - lq - s - t))
        .sum();
    from_p - from_q
}

/// Solve the score equation for the log evidence.
pub fn obs_solve(inputs: &BridgeInputs) -> Result<f64> {
    inputs.validate()?;
    if inputs.ln_p_q.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::EstimationFailure(
            "target density vanishes on every auxiliary draw".into(),
        ));
    }
    let tol = 1e-10 * (inputs.n_p() + inputs.n_q()) as f64;

    // start from the importance sampling value and expand to a bracket
    let is_guess = {
        let lw: Vec<f64> = inputs
            .ln_p_q
            .iter()
            .zip(inputs.ln_q_q)
            .map(|(lp, lq)| lp - lq)
            .collect();
        logmeanexp(&lw)
    };
    let t0 = if is_guess.is_finite() { is_guess } else { 0.0 };

    let (mut lo, mut hi) = (t0 - 1.0, t0 + 1.0);
    let mut step = 2.0;
    for _ in 0..200 {
        if bridge_score(inputs, lo) <= 0.0 {
            break;
        }
        lo -= step;
        step *= 2.0;
    }
    step = 2.0;
    for _ in 0..200 {
        if bridge_score(inputs, hi) >= 0.0 {
            break;
        }
        hi += step;
        step *= 2.0;
    }
    let (mut f_lo, mut f_hi) = (bridge_score(inputs, lo), bridge_score(inputs, hi));
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::EstimationFailure(
            "failed to bracket the bridge score root".into(),
        ));
    }

    // Drive the bracket itself below the width target instead of stopping on
    // a small score. A small score can occur far from the crossing when the
    // overlap is thin, and the swapped-roles run must land on the mirrored
    // root to full precision.
    let mut t = 0.5 * (lo + hi);
    for iter in 0..500 {
        if hi - lo <= 1e-13 * (1.0 + t.abs()) {
            break;
        }
        let f = bridge_score(inputs, t);
        if f > 0.0 {
            hi = t;
            f_hi = f;
        } else {
            lo = t;
            f_lo = f;
        }
        // secant proposal with bisection interleaved to guarantee progress
        let secant = if f_hi > f_lo {
            lo - f_lo * (hi - lo) / (f_hi - f_lo)
        } else {
            f64::NAN
        };
        t = if secant.is_finite() && secant > lo && secant < hi && iter % 2 == 0 {
            secant
        } else {
            0.5 * (lo + hi)
        };
    }
    let root = 0.5 * (lo + hi);
    if bridge_score(inputs, root).abs() > tol {
        return Err(Error::EstimationFailure(
            "bridge score does not vanish at the bracketed root".into(),
        ));
    }
    Ok(root)
}

/// The two relative variance contributions of a bridge estimate at `ln_r`:
/// the auxiliary-sample term and the posterior-sample term. Their sum is the
/// squared relative error. `tau_f2` inflates the posterior term for sample
/// autocorrelation.
pub fn obs_error_terms(inputs: &BridgeInputs, ln_r: f64, tau_f2: f64) -> Result<(f64, f64)> {
    inputs.validate()?;
    let n_p = inputs.n_p() as f64;
    let n_q = inputs.n_q() as f64;
    let ln_sp_sq = (n_p / n_q).ln();

    // f1 on auxiliary draws, f2 on posterior draws, up to a common factor
    // that cancels in Var/E^2
    let f1: Vec<f64> = inputs
        .ln_p_q
        .iter()
        .zip(inputs.ln_q_q)
        .map(|(lp, lq)| sigmoid(lp - ln_r - lq + ln_sp_sq))
        .collect();
    let f2: Vec<f64> = inputs
        .ln_p_p
        .iter()
        .zip(inputs.ln_q_p)
        .map(|(lp, lq)| sigmoid(-(lp - ln_r - lq + ln_sp_sq)))
        .collect();

    let term = |f: &[f64]| -> Result<f64> {
        let n = f.len() as f64;
        let mean = f.iter().sum::<f64>() / n;
        if mean <= 0.0 {
            return Err(Error::EstimationFailure(
                "bridge integrand has zero mean".into(),
            ));
        }
        let var = f.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Ok(var / (n * mean * mean))
    };
    Ok((term(&f1)?, tau_f2 * term(&f2)?))
}

/// Squared relative error of the bridge estimate.
pub fn obs_error(inputs: &BridgeInputs, ln_r: f64, tau_f2: f64) -> Result<f64> {
    let (term_q, term_p) = obs_error_terms(inputs, ln_r, tau_f2)?;
    Ok(term_q + term_p)
}

/// Bridge integrand on the posterior draws, used for its autocorrelation
/// time. Values are bounded in (0, 1), so the series is well behaved.
pub(crate) fn f2_series(ln_p_p: &[f64], ln_q_p: &[f64], ln_r: f64, ln_sp_sq: f64) -> Vec<f64> {
    ln_p_p
        .iter()
        .zip(ln_q_p)
        .map(|(lp, lq)| sigmoid(-(lp - ln_r - lq + ln_sp_sq)))
        .collect()
}

/// How many auxiliary draws to use, given the pilot error split.
///
/// `term_q` and `term_p` come from a pilot with `n_q0` auxiliary draws. The
/// returned count makes the auxiliary term an `f_err` fraction of the total
/// squared error, floored at the pilot size and capped so auxiliary density
/// evaluations stay an `f_eva` fraction of the total evaluation budget.
pub fn adaptive_nq(
    term_q: f64,
    term_p: f64,
    n_q0: usize,
    f_err: f64,
    f_eva: f64,
    sampling_evals: u64,
) -> usize {
    let c1 = term_q * n_q0 as f64;
    let raw = if term_p > 0.0 {
        c1 * (1.0 - f_err) / (f_err * term_p)
    } else {
        n_q0 as f64
    };
    let cap = (f_eva * sampling_evals as f64 / (1.0 - f_eva)).floor().max(1.0) as usize;
    // the cap limits growth beyond the pilot, never below it: those draws
    // are already spent
    (raw.ceil() as usize).min(cap).max(n_q0).max(1)
}

/// Importance sampling from a normalized auxiliary density. Returns the log
/// evidence and its squared relative error.
pub fn importance_sampling(ln_p_q: &[f64], ln_q_q: &[f64]) -> Result<(f64, f64)> {
    if ln_p_q.len() != ln_q_q.len() || ln_p_q.is_empty() {
        return Err(Error::InvalidArgument(
            "importance sampling needs matching nonempty slices".into(),
        ));
    }
    let lw: Vec<f64> = ln_p_q.iter().zip(ln_q_q).map(|(lp, lq)| lp - lq).collect();
    let ln_z = logmeanexp(&lw);
    if !ln_z.is_finite() {
        return Err(Error::EstimationFailure(
            "importance weights are all zero".into(),
        ));
    }
    let n = lw.len() as f64;
    let var: f64 = lw
        .iter()
        .map(|w| {
            let f = (w - ln_z).exp();
            (f - 1.0) * (f - 1.0)
        })
        .sum::<f64>()
        / (n - 1.0);
    Ok((ln_z, var / n))
}

/// Harmonic mean of likelihood ratios over posterior draws. `tau` is the
/// autocorrelation time of the integrand along the chains. Returns the log
/// evidence and its squared relative error.
pub fn harmonic_mean(ln_p_p: &[f64], ln_q_p: &[f64], tau: f64) -> Result<(f64, f64)> {
    if ln_p_p.len() != ln_q_p.len() || ln_p_p.is_empty() {
        return Err(Error::InvalidArgument(
            "harmonic mean needs matching nonempty slices".into(),
        ));
    }
    let lw: Vec<f64> = ln_p_p.iter().zip(ln_q_p).map(|(lp, lq)| lq - lp).collect();
    let lme = logmeanexp(&lw);
    if !lme.is_finite() {
        return Err(Error::EstimationFailure(
            "harmonic mean weights are degenerate".into(),
        ));
    }
    let n = lw.len() as f64;
    let var: f64 = lw
        .iter()
        .map(|w| {
            let f = (w - lme).exp();
            (f - 1.0) * (f - 1.0)
        })
        .sum::<f64>()
        / (n - 1.0);
    Ok((-lme, tau * var / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    const LN_2PI: f64 = 1.837_877_066_409_345_5;

    fn ln_normal(x: f64, mu: f64, sigma: f64) -> f64 {
        let z = (x - mu) / sigma;
        -0.5 * LN_2PI - sigma.ln() - 0.5 * z * z
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(f64::NEG_INFINITY), 0.0);
        assert_eq!(sigmoid(f64::INFINITY), 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(800.0) - 1.0).abs() < 1e-15);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_distributions_give_zero_exactly() {
        let mut rng = rng_from_seed(41);
        let lp_p: Vec<f64> = (0..700).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let lp_q: Vec<f64> = (0..1300).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let inputs = BridgeInputs {
            ln_p_p: &lp_p,
            ln_q_p: &lp_p,
            ln_p_q: &lp_q,
            ln_q_q: &lp_q,
        };
        let ln_r = obs_solve(&inputs).unwrap();
        assert!(ln_r.abs() < 1e-12, "got {ln_r}");
    }

    #[test]
    fn constant_ratio_is_recovered_exactly() {
        let mut rng = rng_from_seed(42);
        let c = 3.7_f64.ln();
        let lq_p: Vec<f64> = (0..900).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let lq_q: Vec<f64> = (0..400).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let lp_p: Vec<f64> = lq_p.iter().map(|v| v + c).collect();
        let lp_q: Vec<f64> = lq_q.iter().map(|v| v + c).collect();
        let inputs = BridgeInputs {
            ln_p_p: &lp_p,
            ln_q_p: &lq_p,
            ln_p_q: &lp_q,
            ln_q_q: &lq_q,
        };
        let ln_r = obs_solve(&inputs).unwrap();
        assert!((ln_r - c).abs() < 1e-12, "got {ln_r}, want {c}");
    }

    #[test]
    fn shifting_the_target_shifts_the_answer() {
        let mut rng = rng_from_seed(43);
        let n = 500;
        let xs_p: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let xs_q: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 1.3 + 0.2)
            .collect();
        let lp_p: Vec<f64> = xs_p.iter().map(|&x| ln_normal(x, 0.0, 1.0)).collect();
        let lq_p: Vec<f64> = xs_p.iter().map(|&x| ln_normal(x, 0.2, 1.3)).collect();
        let lp_q: Vec<f64> = xs_q.iter().map(|&x| ln_normal(x, 0.0, 1.0)).collect();
        let lq_q: Vec<f64> = xs_q.iter().map(|&x| ln_normal(x, 0.2, 1.3)).collect();
        let base = obs_solve(&BridgeInputs {
            ln_p_p: &lp_p,
            ln_q_p: &lq_p,
            ln_p_q: &lp_q,
            ln_q_q: &lq_q,
        })
        .unwrap();
        let delta = 2.5;
        let lp_p_s: Vec<f64> = lp_p.iter().map(|v| v + delta).collect();
        let lp_q_s: Vec<f64> = lp_q.iter().map(|v| v + delta).collect();
        let shifted = obs_solve(&BridgeInputs {
            ln_p_p: &lp_p_s,
            ln_q_p: &lq_p,
            ln_p_q: &lp_q_s,
            ln_q_q: &lq_q,
        })
        .unwrap();
        assert!((shifted - base - delta).abs() < 1e-12, "{base} -> {shifted}");
    }

    #[test]
    fn swapping_roles_negates_the_answer() {
        let mut rng = rng_from_seed(44);
        let xs_p: Vec<f64> = (0..600).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let xs_q: Vec<f64> = (0..900)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 0.8 - 0.1)
            .collect();
        let lp_p: Vec<f64> = xs_p.iter().map(|&x| ln_normal(x, 0.0, 1.0) + 1.9).collect();
        let lq_p: Vec<f64> = xs_p.iter().map(|&x| ln_normal(x, -0.1, 0.8)).collect();
        let lp_q: Vec<f64> = xs_q.iter().map(|&x| ln_normal(x, 0.0, 1.0) + 1.9).collect();
        let lq_q: Vec<f64> = xs_q.iter().map(|&x| ln_normal(x, -0.1, 0.8)).collect();
        let forward = obs_solve(&BridgeInputs {
            ln_p_p: &lp_p,
            ln_q_p: &lq_p,
            ln_p_q: &lp_q,
            ln_q_q: &lq_q,
        })
        .unwrap();
        let swapped = obs_solve(&BridgeInputs {
            ln_p_p: &lq_q,
            ln_q_p: &lp_q,
            ln_p_q: &lq_p,
            ln_q_q: &lp_p,
        })
        .unwrap();
        assert!((forward + swapped).abs() < 1e-12, "{forward} vs {swapped}");
    }

    #[test]
    fn gaussian_evidence_within_error_bars() {
        let mut rng = rng_from_seed(45);
        let ln_z_true = 4.2;
        let n_p = 20_000;
        let n_q = 30_000;
        let xs_p: Vec<f64> = (0..n_p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let xs_q: Vec<f64> = (0..n_q)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 1.2 + 0.5)
            .collect();
        let lp_p: Vec<f64> = xs_p.iter().map(|&x| ln_normal(x, 0.0, 1.0) + ln_z_true).collect();
        let lq_p: Vec<f64> = xs_p.iter().map(|&x| ln_normal(x, 0.5, 1.2)).collect();
        let lp_q: Vec<f64> = xs_q.iter().map(|&x| ln_normal(x, 0.0, 1.0) + ln_z_true).collect();
        let lq_q: Vec<f64> = xs_q.iter().map(|&x| ln_normal(x, 0.5, 1.2)).collect();
        let inputs = BridgeInputs {
            ln_p_p: &lp_p,
            ln_q_p: &lq_p,
            ln_p_q: &lp_q,
            ln_q_q: &lq_q,
        };
        let ln_r = obs_solve(&inputs).unwrap();
        let re2 = obs_error(&inputs, ln_r, 1.0).unwrap();
        let se = re2.sqrt();
        assert!(se < 0.05, "independent draws should give a tight bridge, se = {se}");
        assert!(
            (ln_r - ln_z_true).abs() < 4.0 * se,
            "ln r = {ln_r}, truth {ln_z_true}, se {se}"
        );
    }

    #[test]
    fn error_bars_predict_replication_scatter() {
        let mut rng = rng_from_seed(46);
        let reps = 48;
        let mut estimates = Vec::with_capacity(reps);
        let mut predicted = Vec::with_capacity(reps);
        for _ in 0..reps {
            let n = 2_000;
            let xs_p: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let xs_q: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 1.4)
                .collect();
            let lp_p: Vec<f64> = xs_p.iter().map(|&x| ln_normal(x, 0.0, 1.0)).collect();
            let lq_p: Vec<f64> = xs_p.iter().map(|&x| ln_normal(x, 0.0, 1.4)).collect();
            let lp_q: Vec<f64> = xs_q.iter().map(|&x| ln_normal(x, 0.0, 1.0)).collect();
            let lq_q: Vec<f64> = xs_q.iter().map(|&x| ln_normal(x, 0.0, 1.4)).collect();
            let inputs = BridgeInputs {
                ln_p_p: &lp_p,
                ln_q_p: &lq_p,
                ln_p_q: &lp_q,
                ln_q_q: &lq_q,
            };
            let ln_r = obs_solve(&inputs).unwrap();
            estimates.push(ln_r);
            predicted.push(obs_error(&inputs, ln_r, 1.0).unwrap().sqrt());
        }
        let mean = estimates.iter().sum::<f64>() / reps as f64;
        let emp_var =
            estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (reps - 1) as f64;
        let pred_var = predicted.iter().map(|s| s * s).sum::<f64>() / reps as f64;
        let ratio = emp_var / pred_var;
        assert!(
            (0.4..2.5).contains(&ratio),
            "empirical {emp_var:.3e} vs predicted {pred_var:.3e}"
        );
    }

    #[test]
    fn vanishing_target_draws_are_tolerated() {
        let mut rng = rng_from_seed(47);
        let lp_p: Vec<f64> = (0..400).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut lp_q: Vec<f64> = (0..400).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for v in lp_q.iter_mut().step_by(7) {
            *v = f64::NEG_INFINITY;
        }
        let lq_q = vec![0.0; 400];
        let inputs = BridgeInputs {
            ln_p_p: &lp_p,
            ln_q_p: &lp_p,
            ln_p_q: &lp_q,
            ln_q_q: &lq_q,
        };
        let ln_r = obs_solve(&inputs).unwrap();
        assert!(ln_r.is_finite());
        let re2 = obs_error(&inputs, ln_r, 1.0).unwrap();
        assert!(re2.is_finite() && re2 > 0.0);
    }

    #[test]
    fn allocation_matches_the_balance_rule() {
        // equal pilot terms with a tenth of the error in the auxiliary term
        let n = adaptive_nq(0.25, 0.25, 1_000, 0.1, 0.1, u64::MAX / 2);
        assert_eq!(n, 9_000);
        // no posterior noise: stay at the pilot size
        assert_eq!(adaptive_nq(0.25, 0.0, 1_000, 0.1, 0.1, u64::MAX / 2), 1_000);
        // never shrink below the pilot
        assert_eq!(adaptive_nq(1e-9, 1.0, 500, 0.1, 0.1, u64::MAX / 2), 500);
        // evaluation budget cap binds
        let capped = adaptive_nq(0.25, 0.25, 1_000, 0.1, 0.1, 18_000);
        assert_eq!(capped, 2_000);
    }

    #[test]
    fn importance_sampling_recovers_constant_offset_exactly() {
        let lq = vec![-1.0, 0.3, 0.7, -2.2];
        let lp: Vec<f64> = lq.iter().map(|v| v + 5.5).collect();
        let (ln_z, re2) = importance_sampling(&lp, &lq).unwrap();
        assert!((ln_z - 5.5).abs() < 1e-14);
        assert!(re2 < 1e-28);
    }

    #[test]
    fn harmonic_mean_recovers_constant_offset_exactly() {
        let lp = vec![0.1, -0.4, 2.0, 1.1, 0.0];
        let lq: Vec<f64> = lp.iter().map(|v| v - 2.5).collect();
        let (ln_z, re2) = harmonic_mean(&lp, &lq, 1.0).unwrap();
        assert!((ln_z - 2.5).abs() < 1e-14);
        assert!(re2 < 1e-28);
    }

    #[test]
    fn importance_sampling_gaussian_check() {
        let mut rng = rng_from_seed(48);
        let n = 50_000;
        let ln_z_true = -3.0;
        let mut lp = Vec::with_capacity(n);
        let mut lq = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.sample::<f64, _>(StandardNormal) * 1.5;
            lp.push(ln_normal(x, 0.0, 1.0) + ln_z_true);
            lq.push(ln_normal(x, 0.0, 1.5));
        }
        let (ln_z, re2) = importance_sampling(&lp, &lq).unwrap();
        let se = re2.sqrt();
        assert!((ln_z - ln_z_true).abs() < 4.0 * se, "{ln_z} vs {ln_z_true}, se {se}");
    }

    #[test]
    fn harmonic_mean_gaussian_check() {
        let mut rng = rng_from_seed(49);
        let n = 50_000;
        let ln_z_true = 1.5;
        let mut lp = Vec::with_capacity(n);
        let mut lq = Vec::with_capacity(n);
        for _ in 0..n {
            // q is narrower than p, the regime where the harmonic mean works
            let x: f64 = rng.sample::<f64, _>(StandardNormal);
            lp.push(ln_normal(x, 0.0, 1.0) + ln_z_true);
            lq.push(ln_normal(x, 0.0, 0.8));
        }
        let (ln_z, re2) = harmonic_mean(&lp, &lq, 1.0).unwrap();
        let se = re2.sqrt();
        assert!((ln_z - ln_z_true).abs() < 4.0 * se, "{ln_z} vs {ln_z_true}, se {se}");
    }

    proptest::proptest! {
        #[test]
        fn score_is_monotone_in_t(
            lp_p in proptest::collection::vec(-30.0..30.0f64, 3..40),
            lq_p in proptest::collection::vec(-30.0..30.0f64, 3..40),
            lp_q in proptest::collection::vec(-30.0..30.0f64, 3..40),
            lq_q in proptest::collection::vec(-30.0..30.0f64, 3..40),
            t1 in -25.0..25.0f64,
            dt in 0.0..20.0f64,
        ) {
            let n_p = lp_p.len().min(lq_p.len());
            let n_q = lp_q.len().min(lq_q.len());
            let inputs = BridgeInputs {
                ln_p_p: &lp_p[..n_p],
                ln_q_p: &lq_p[..n_p],
                ln_p_q: &lp_q[..n_q],
                ln_q_q: &lq_q[..n_q],
            };
            let s1 = bridge_score(&inputs, t1);
            let s2 = bridge_score(&inputs, t1 + dt);
            proptest::prop_assert!(s2 >= s1 - 1e-12);
        }

        #[test]
        fn solved_root_is_a_fixed_point_of_the_duality(
            which in 0u8..3,
            shift in -6.0..6.0f64,
        ) {
            let mut rng = rng_from_seed(50 + which as u64);
            let xs_p: Vec<f64> = (0..300).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let xs_q: Vec<f64> = (0..450)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 1.1 + 0.3)
                .collect();
            let lp_p: Vec<f64> = xs_p.iter().map(|&x| ln_normal(x, 0.0, 1.0) + shift).collect();
            let lq_p: Vec<f64> = xs_p.iter().map(|&x| ln_normal(x, 0.3, 1.1)).collect();
            let lp_q: Vec<f64> = xs_q.iter().map(|&x| ln_normal(x, 0.0, 1.0) + shift).collect();
            let lq_q: Vec<f64> = xs_q.iter().map(|&x| ln_normal(x, 0.3, 1.1)).collect();
            let forward = obs_solve(&BridgeInputs {
                ln_p_p: &lp_p, ln_q_p: &lq_p, ln_p_q: &lp_q, ln_q_q: &lq_q,
            }).unwrap();
            let swapped = obs_solve(&BridgeInputs {
                ln_p_p: &lq_q, ln_q_p: &lp_q, ln_p_q: &lq_p, ln_q_q: &lp_p,
            }).unwrap();
            proptest::prop_assert!((forward + swapped).abs() < 1e-10);
        }
    }
}
