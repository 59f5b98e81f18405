//! Warp bridge estimator: a moment-matched Gaussian bridge against a
//! symmetrized target.
//!
//! The first half of the posterior draws fixes a Gaussian (mean and
//! Cholesky-factored covariance). The second half enters a bridge against
//! that Gaussian, with the target density symmetrized about the Gaussian
//! mean. Both the Gaussian and the symmetrized target are invariant under
//! reflection through the mean, so the posterior draws represent the
//! symmetrized density without any resampling, and the symmetrization
//! cancels the leading skewness mismatch.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::density::{BoxPriorTarget, EvalLedger};
use crate::diagnostics::integrated_autocorr_time;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, covariance, row_mean, solve_lower};
use crate::rng::rng_from_seed;
use crate::sampler::SampleBatch;

use super::bridge::{adaptive_nq, f2_series, obs_error_terms, obs_solve, BridgeInputs};
use super::{AllocationPolicy, EvidenceEstimate, Method};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

struct GaussianWarp {
    mean: Array1<f64>,
    chol: Array2<f64>,
    ln_det_half: f64,
}

impl GaussianWarp {
    fn from_draws(draws: &ArrayView2<f64>) -> Result<Self> {
        let mean = row_mean(draws);
        let cov = covariance(draws);
        let chol = match cholesky_lower(&cov) {
            Ok(c) => c,
            Err(_) => {
                let mut jittered = cov.clone();
                let scale: f64 = (0..cov.nrows()).map(|i| cov[[i, i]]).sum::<f64>()
                    / cov.nrows() as f64;
                for i in 0..cov.nrows() {
                    jittered[[i, i]] += 1e-10 * scale.max(1e-300);
                }
                cholesky_lower(&jittered)?
            }
        };
        let ln_det_half = (0..chol.nrows()).map(|i| chol[[i, i]].ln()).sum();
        Ok(Self {
            mean,
            chol,
            ln_det_half,
        })
    }

    fn log_pdf(&self, x: &[f64]) -> f64 {
        let dim = self.mean.len();
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let z = solve_lower(&self.chol, &diff);
        let sq: f64 = z.iter().map(|v| v * v).sum();
        -0.5 * dim as f64 * LN_2PI - self.ln_det_half - 0.5 * sq
    }

    fn reflect(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).map(|(v, m)| 2.0 * m - v).collect()
    }

    /// Draw `n` points. The stream is row sequential, so the first rows of a
    /// longer draw with the same seed reproduce a shorter one exactly.
    fn sample(&self, n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let dim = self.mean.len();
        let mut rng = rng_from_seed(seed);
        let mut draws = Array2::zeros((n, dim));
        let mut log_q = Vec::with_capacity(n);
        let mut z = vec![0.0; dim];
        for i in 0..n {
            let mut sq = 0.0;
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
                sq += *v * *v;
            }
            for r in 0..dim {
                let mut acc = self.mean[r];
                for c in 0..=r {
                    acc += self.chol[[r, c]] * z[c];
                }
                draws[[i, r]] = acc;
            }
            log_q.push(-0.5 * dim as f64 * LN_2PI - self.ln_det_half - 0.5 * sq);
        }
        (draws, log_q)
    }
}

/// Symmetrized target log density at `x`, charging the ledger for each
/// in-box likelihood evaluation. `cached` supplies an already known value of
/// the target log density at `x` itself, if any.
fn ln_p_sym<T: BoxPriorTarget>(
    target: &T,
    warp: &GaussianWarp,
    x: &[f64],
    cached: Option<f64>,
    ledger: &mut EvalLedger,
) -> f64 {
    let own = match cached {
        Some(v) => v,
        None => {
            if target.in_box(x) {
                ledger.add_likelihood(1);
            }
            target.log_prob(x)
        }
    };
    let refl = warp.reflect(x);
    if target.in_box(&refl) {
        ledger.add_likelihood(1);
    }
    let other = target.log_prob(&refl);
    logaddexp(own, other) - std::f64::consts::LN_2
}

/// Bridge between the symmetrized target and a moment-matched Gaussian.
///
/// `batch` must hold the full posterior sample; its first half fixes the
/// Gaussian and its second half enters the bridge. The auxiliary sample size
/// starts at the bridge sample size and grows by the adaptive allocation
/// rule.
pub fn warp_bridge<T: BoxPriorTarget>(
    target: &T,
    batch: &SampleBatch,
    policy: &AllocationPolicy,
    seed: u64,
) -> Result<EvidenceEstimate> {
    let (fit_half, bridge_half) = batch.split_halves();
    if fit_half.total_draws() < 2 * batch.dim {
        return Err(Error::DegenerateSamples(
            "too few draws to estimate warp moments".into(),
        ));
    }
    let mut ledger = batch.ledger;
    let sampling_evals = ledger.likelihood;

    let warp = GaussianWarp::from_draws(&fit_half.flattened().view())?;

    // symmetrized target and Gaussian density on the bridge draws
    let bridge_rows = bridge_half.flattened();
    let cached_lnp = bridge_half.logp_flattened();
    let n_p = bridge_rows.nrows();
    let mut ln_p_p = Vec::with_capacity(n_p);
    let mut ln_q_p = Vec::with_capacity(n_p);
    for (row, &cache) in bridge_rows.rows().into_iter().zip(&cached_lnp) {
        let x = row.as_slice().expect("contiguous row");
        ln_p_p.push(ln_p_sym(target, &warp, x, Some(cache), &mut ledger));
        ln_q_p.push(warp.log_pdf(x));
    }

    let n_q0 = n_p.max(1);
    let q_seed = crate::rng::derive_seed(seed, 0x71);
    let (q_draws, mut ln_q_q) = warp.sample(n_q0, q_seed);
    let mut ln_p_q = Vec::with_capacity(n_q0);
    for row in q_draws.rows() {
        let x = row.as_slice().expect("contiguous row");
        ln_p_q.push(ln_p_sym(target, &warp, x, None, &mut ledger));
    }

    let solve_and_terms = |ln_p_q: &[f64], ln_q_q: &[f64], ledger_snapshot: &EvalLedger| {
        let inputs = BridgeInputs {
            ln_p_p: &ln_p_p,
            ln_q_p: &ln_q_p,
            ln_p_q,
            ln_q_q,
        };
        let ln_r = obs_solve(&inputs)?;
        let ln_sp_sq = (inputs.n_p() as f64 / inputs.n_q() as f64).ln();
        let tau = f2_autocorr(&bridge_half, &ln_p_p, &ln_q_p, ln_r, ln_sp_sq)?;
        let (term_q, term_p) = obs_error_terms(&inputs, ln_r, tau)?;
        Ok::<_, Error>((ln_r, tau, term_q, term_p, *ledger_snapshot))
    };

    let (_, _, term_q, term_p, _) = solve_and_terms(&ln_p_q, &ln_q_q, &ledger)?;
    let n_q = adaptive_nq(
        term_q,
        term_p,
        n_q0,
        policy.f_err,
        policy.f_eva,
        sampling_evals,
    );

    if n_q > n_q0 {
        let (all_draws, all_ln_q) = warp.sample(n_q, q_seed);
        for row in all_draws.rows().into_iter().skip(n_q0) {
            let x = row.as_slice().expect("contiguous row");
            ln_p_q.push(ln_p_sym(target, &warp, x, None, &mut ledger));
        }
        ln_q_q = all_ln_q;
    }

    let (ln_r, tau, term_q, term_p, ledger) = solve_and_terms(&ln_p_q, &ln_q_q, &ledger)?;
    Ok(EvidenceEstimate {
        method: Method::Wbs,
        ln_z: ln_r,
        std_err: (term_q + term_p).sqrt(),
        n_p,
        n_q,
        tau_f2: Some(tau),
        evals: ledger,
    })
}

/// Autocorrelation time of the posterior-side bridge integrand, respecting
/// the chain structure of the bridge half.
pub(crate) fn f2_autocorr(
    bridge_half: &SampleBatch,
    ln_p_p: &[f64],
    ln_q_p: &[f64],
    ln_r: f64,
    ln_sp_sq: f64,
) -> Result<f64> {
    let all = f2_series(ln_p_p, ln_q_p, ln_r, ln_sp_sq);
    let mut chains = Vec::with_capacity(bridge_half.chains.len());
    let mut offset = 0;
    for chain in &bridge_half.chains {
        let n = chain.logp.len();
        chains.push(all[offset..offset + n].to_vec());
        offset += n;
    }
    let result = integrated_autocorr_time(&chains)?;
    Ok(result.tau)
}
