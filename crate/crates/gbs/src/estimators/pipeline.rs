//! End-to-end evidence pipelines: sample the posterior, Gaussianize, bridge.
//!
//! All pipelines share the same skeleton. Chains are split in half; the
//! first half fits the auxiliary distribution and the second half feeds the
//! estimator, so fitting noise and estimation noise stay independent. A
//! pilot round of auxiliary draws sizes the final auxiliary sample by the
//! adaptive allocation rule.

use ndarray::Array2;

use crate::density::{BoxPriorTarget, EvalLedger};
use crate::error::Result;
use crate::flow::{FlowConfig, FlowModel};
use crate::rng::derive_seed;
use crate::sampler::{sample, SamplerConfig};

use super::bridge::{
    adaptive_nq, harmonic_mean, importance_sampling, obs_error_terms, obs_solve, BridgeInputs,
};
use super::warp::{f2_autocorr, warp_bridge};
use super::{AllocationPolicy, EvidenceEstimate, Method};

const STREAM_SAMPLE: u64 = 0x5A;
const STREAM_FLOW: u64 = 0x46;
const STREAM_QDRAWS: u64 = 0x51;
const STREAM_FLOW_FULL: u64 = 0x47;
const STREAM_QDRAWS_FINAL: u64 = 0x52;

/// Everything a full pipeline run needs besides the target and a seed.
#[derive(Clone, Debug, Default)]
pub struct PipelineConfig {
    pub sampler: SamplerConfig,
    pub flow: FlowConfig,
    pub allocation: AllocationPolicy,
}

impl PipelineConfig {
    /// The light variant: half the chains, iterations, and flow layers.
    fn lite(&self) -> PipelineConfig {
        let mut cfg = self.clone();
        cfg.sampler.n_chains = (self.sampler.n_chains / 2).max(1);
        cfg.sampler.n_iters = (self.sampler.n_iters / 2).max(20);
        cfg.flow.n_layers = (self.flow.n_layers / 2).max(1);
        cfg
    }
}

/// Target log density on each row, charging the ledger only when the
/// likelihood is actually evaluated. Out-of-box rows cost nothing and score
/// negative infinity.
fn target_log_probs<T: BoxPriorTarget>(
    target: &T,
    rows: &Array2<f64>,
    from: usize,
    ledger: &mut EvalLedger,
) -> Vec<f64> {
    rows.rows()
        .into_iter()
        .skip(from)
        .map(|r| {
            let x = r.as_slice().expect("contiguous row");
            if target.in_box(x) {
                ledger.add_likelihood(1);
            }
            target.log_prob(x)
        })
        .collect()
}

fn flow_log_densities(flow: &FlowModel, rows: &Array2<f64>) -> Vec<f64> {
    rows.rows()
        .into_iter()
        .map(|r| flow.log_density(r.as_slice().expect("contiguous row")))
        .collect()
}

/// Gaussianized bridge sampling.
pub fn gbs<T: BoxPriorTarget>(
    target: &T,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<EvidenceEstimate> {
    bridge_pipeline(target, cfg, seed, Method::Gbs)
}

/// The light variant of [`gbs`]: half the sampling and half the flow depth.
pub fn gbsl<T: BoxPriorTarget>(
    target: &T,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<EvidenceEstimate> {
    bridge_pipeline(target, &cfg.lite(), seed, Method::Gbsl)
}

fn bridge_pipeline<T: BoxPriorTarget>(
    target: &T,
    cfg: &PipelineConfig,
    seed: u64,
    method: Method,
) -> Result<EvidenceEstimate> {
    let batch = sample(target, &cfg.sampler, derive_seed(seed, STREAM_SAMPLE))?;
    let (fit_half, bridge_half) = batch.split_halves();
    let mut ledger = batch.ledger;
    let sampling_evals = ledger.likelihood;

    let flow = FlowModel::fit(
        &fit_half.flattened().view(),
        &cfg.flow,
        derive_seed(seed, STREAM_FLOW),
    )?;

    let bridge_rows = bridge_half.flattened();
    let ln_p_p = bridge_half.logp_flattened();
    let ln_q_p = flow_log_densities(&flow, &bridge_rows);
    let n_p = ln_p_p.len();

    let n_q0 = n_p.max(1);
    let q_seed = derive_seed(seed, STREAM_QDRAWS);
    let (q_draws, mut ln_q_q) = flow.sample(n_q0, q_seed);
    let mut ln_p_q = target_log_probs(target, &q_draws, 0, &mut ledger);

    let solve = |ln_p_q: &[f64], ln_q_q: &[f64]| -> Result<(f64, f64, f64, f64)> {
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
        Ok((ln_r, tau, term_q, term_p))
    };

    let (_, _, term_q, term_p) = solve(&ln_p_q, &ln_q_q)?;
    let n_q = adaptive_nq(
        term_q,
        term_p,
        n_q0,
        cfg.allocation.f_err,
        cfg.allocation.f_eva,
        sampling_evals,
    );

    if n_q > n_q0 {
        // redrawing with the same seed replays the pilot rows first, so the
        // pilot evaluations are reused rather than repeated
        let (all_draws, all_ln_q) = flow.sample(n_q, q_seed);
        ln_p_q.extend(target_log_probs(target, &all_draws, n_q0, &mut ledger));
        ln_q_q = all_ln_q;
    }

    let (ln_r, tau, term_q, term_p) = solve(&ln_p_q, &ln_q_q)?;
    Ok(EvidenceEstimate {
        method,
        ln_z: ln_r,
        std_err: (term_q + term_p).sqrt(),
        n_p,
        n_q,
        tau_f2: Some(tau),
        evals: ledger,
    })
}

/// Gaussianized importance sampling: the flow pilot sizes the draw budget,
/// then a flow fitted on every posterior draw feeds plain importance
/// sampling.
pub fn gis<T: BoxPriorTarget>(
    target: &T,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<EvidenceEstimate> {
    let batch = sample(target, &cfg.sampler, derive_seed(seed, STREAM_SAMPLE))?;
    let (fit_half, bridge_half) = batch.split_halves();
    let mut ledger = batch.ledger;
    let sampling_evals = ledger.likelihood;

    let pilot_flow = FlowModel::fit(
        &fit_half.flattened().view(),
        &cfg.flow,
        derive_seed(seed, STREAM_FLOW),
    )?;

    let bridge_rows = bridge_half.flattened();
    let ln_p_p = bridge_half.logp_flattened();
    let ln_q_p = flow_log_densities(&pilot_flow, &bridge_rows);
    let n_q0 = ln_p_p.len().max(1);

    let (q_draws, ln_q_q) = pilot_flow.sample(n_q0, derive_seed(seed, STREAM_QDRAWS));
    let ln_p_q = target_log_probs(target, &q_draws, 0, &mut ledger);

    let inputs = BridgeInputs {
        ln_p_p: &ln_p_p,
        ln_q_p: &ln_q_p,
        ln_p_q: &ln_p_q,
        ln_q_q: &ln_q_q,
    };
    let ln_r = obs_solve(&inputs)?;
    let ln_sp_sq = (inputs.n_p() as f64 / inputs.n_q() as f64).ln();
    let tau = f2_autocorr(&bridge_half, &ln_p_p, &ln_q_p, ln_r, ln_sp_sq)?;
    let (term_q, term_p) = obs_error_terms(&inputs, ln_r, tau)?;
    let n_q = adaptive_nq(
        term_q,
        term_p,
        n_q0,
        cfg.allocation.f_err,
        cfg.allocation.f_eva,
        sampling_evals,
    );

    let full_flow = FlowModel::fit(
        &batch.flattened().view(),
        &cfg.flow,
        derive_seed(seed, STREAM_FLOW_FULL),
    )?;
    let (final_draws, final_ln_q) = full_flow.sample(n_q, derive_seed(seed, STREAM_QDRAWS_FINAL));
    let final_ln_p = target_log_probs(target, &final_draws, 0, &mut ledger);
    let (ln_z, re2) = importance_sampling(&final_ln_p, &final_ln_q)?;

    Ok(EvidenceEstimate {
        method: Method::Gis,
        ln_z,
        std_err: re2.sqrt(),
        n_p: batch.total_draws(),
        n_q,
        tau_f2: None,
        evals: ledger,
    })
}

/// Gaussianized harmonic mean: the flow plays the auxiliary role and only
/// cached posterior densities enter, so nothing is evaluated beyond
/// sampling.
pub fn ghm<T: BoxPriorTarget>(
    target: &T,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<EvidenceEstimate> {
    let batch = sample(target, &cfg.sampler, derive_seed(seed, STREAM_SAMPLE))?;
    let (fit_half, bridge_half) = batch.split_halves();

    let flow = FlowModel::fit(
        &fit_half.flattened().view(),
        &cfg.flow,
        derive_seed(seed, STREAM_FLOW),
    )?;

    let bridge_rows = bridge_half.flattened();
    let ln_p_p = bridge_half.logp_flattened();
    let ln_q_p = flow_log_densities(&flow, &bridge_rows);
    let n_p = ln_p_p.len();

    // autocorrelation of the harmonic mean integrand along the chains
    let lw: Vec<f64> = ln_p_p
        .iter()
        .zip(&ln_q_p)
        .map(|(lp, lq)| lq - lp)
        .collect();
    let lme = {
        let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + (lw.iter().map(|v| (v - max).exp()).sum::<f64>() / lw.len() as f64).ln()
    };
    let f_norm: Vec<f64> = lw.iter().map(|v| (v - lme).exp()).collect();
    let mut chains = Vec::with_capacity(bridge_half.chains.len());
    let mut offset = 0;
    for chain in &bridge_half.chains {
        let n = chain.logp.len();
        chains.push(f_norm[offset..offset + n].to_vec());
        offset += n;
    }
    let tau = crate::diagnostics::integrated_autocorr_time(&chains)?.tau;

    let (ln_z, re2) = harmonic_mean(&ln_p_p, &ln_q_p, tau)?;
    Ok(EvidenceEstimate {
        method: Method::Ghm,
        ln_z,
        std_err: re2.sqrt(),
        n_p,
        n_q: 0,
        tau_f2: Some(tau),
        evals: batch.ledger,
    })
}

/// Warp bridge from a fresh posterior sample.
pub fn wbs<T: BoxPriorTarget>(
    target: &T,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<EvidenceEstimate> {
    let batch = sample(target, &cfg.sampler, derive_seed(seed, STREAM_SAMPLE))?;
    warp_bridge(target, &batch, &cfg.allocation, derive_seed(seed, STREAM_QDRAWS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::synthetic::{GaussianBump1D, UniformBox};

    fn quick_config() -> PipelineConfig {
        PipelineConfig {
            sampler: SamplerConfig {
                n_chains: 4,
                n_iters: 600,
                ..SamplerConfig::default()
            },
            flow: FlowConfig {
                n_layers: 3,
                ..FlowConfig::default()
            },
            allocation: AllocationPolicy::default(),
        }
    }

    #[test]
    fn uniform_box_evidence_is_one() {
        let target = UniformBox { lo: vec![-1.0, -2.0], hi: vec![2.0, 1.5] };
        let est = gbs(&target, &quick_config(), 31).unwrap();
        assert!(
            est.ln_z.abs() < 4.0 * est.std_err.max(0.01),
            "ln Z {} with se {}",
            est.ln_z,
            est.std_err
        );
    }

    #[test]
    fn boxed_gaussian_evidence_matches_the_closed_form() {
        let target = GaussianBump1D { sigma: 0.8, lo: -4.0, hi: 4.0 };
        let truth = target.ln_z();
        let est = gbs(&target, &quick_config(), 32).unwrap();
        assert!(est.std_err < 0.1);
        assert!(
            (est.ln_z - truth).abs() < 5.0 * est.std_err.max(0.01),
            "ln Z {} vs {truth}",
            est.ln_z
        );
        assert_eq!(est.method, Method::Gbs);
        assert!(est.n_q >= est.n_p);
        assert!(est.tau_f2.unwrap() >= 1.0);
    }

    #[test]
    fn lite_variant_spends_less() {
        let target = GaussianBump1D { sigma: 0.8, lo: -4.0, hi: 4.0 };
        let cfg = quick_config();
        let full = gbs(&target, &cfg, 33).unwrap();
        let lite = gbsl(&target, &cfg, 33).unwrap();
        assert_eq!(lite.method, Method::Gbsl);
        assert!(lite.evals.likelihood < full.evals.likelihood);
        assert!(lite.evals.gradient < full.evals.gradient);
        let truth = target.ln_z();
        assert!((lite.ln_z - truth).abs() < 6.0 * lite.std_err.max(0.02));
    }

    #[test]
    fn importance_variant_recovers_the_evidence() {
        let target = GaussianBump1D { sigma: 0.8, lo: -4.0, hi: 4.0 };
        let est = gis(&target, &quick_config(), 34).unwrap();
        assert_eq!(est.method, Method::Gis);
        assert!(est.tau_f2.is_none());
        let truth = target.ln_z();
        assert!(
            (est.ln_z - truth).abs() < 6.0 * est.std_err.max(0.01),
            "ln Z {} vs {truth}, se {}",
            est.ln_z,
            est.std_err
        );
    }

    #[test]
    fn harmonic_variant_costs_nothing_beyond_sampling() {
        let target = GaussianBump1D { sigma: 0.8, lo: -4.0, hi: 4.0 };
        let cfg = quick_config();
        let sampling = sample(&target, &cfg.sampler, derive_seed(35, STREAM_SAMPLE))
            .unwrap()
            .ledger;
        let est = ghm(&target, &cfg, 35).unwrap();
        assert_eq!(est.method, Method::Ghm);
        assert_eq!(est.evals, sampling);
        assert_eq!(est.n_q, 0);
        let truth = target.ln_z();
        assert!(
            (est.ln_z - truth).abs() < 8.0 * est.std_err.max(0.02),
            "ln Z {} vs {truth}, se {}",
            est.ln_z,
            est.std_err
        );
    }

    #[test]
    fn pipelines_are_deterministic() {
        let target = GaussianBump1D { sigma: 1.0, lo: -5.0, hi: 5.0 };
        let cfg = quick_config();
        let a = gbs(&target, &cfg, 36).unwrap();
        let b = gbs(&target, &cfg, 36).unwrap();
        assert_eq!(a.ln_z, b.ln_z);
        assert_eq!(a.std_err, b.std_err);
        assert_eq!(a.evals, b.evals);
        let c = gbs(&target, &cfg, 37).unwrap();
        assert_ne!(a.ln_z, c.ln_z);
    }
}
