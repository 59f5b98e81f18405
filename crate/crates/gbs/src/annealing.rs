//! Annealed importance sampling over power posteriors, in both directions.
//!
//! A ladder of inverse temperatures `beta` interpolates between the flat
//! prior (`beta = 0`) and the posterior (`beta = 1`). Each chain walks the
//! ladder with one NUTS transition per rung and accumulates the log
//! importance weight of its path. Averaging per-chain log weights gives a
//! stochastic lower bound on `ln Z` when walking upward ([`ais`]) and a
//! stochastic upper bound when walking downward ([`rais`]), so the pair
//! brackets the evidence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{BoxPriorTarget, EvalLedger, LogDensity, TemperedTarget};
use crate::error::{Error, Result};
use crate::estimators::{EvidenceEstimate, Method};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampler::adapt_chain;

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse-temperature ladder from 0 to 1.
///
/// The rungs follow a normalized logistic curve in the rung index, so they
/// cluster near both endpoints where the integrand changes fastest. The
/// ladder is symmetric: `betas[t] + betas[T-1-t] = 1`.
#[derive(Clone, Debug, Serialize)]
pub struct AnnealSchedule {
    pub delta: f64,
    pub betas: Vec<f64>,
}

impl AnnealSchedule {
    /// Number of temperatures, endpoints included.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }
}

/// Build the logistic ladder with `t` rungs and sharpness `delta`.
///
/// Larger `delta` concentrates rungs near 0 and 1; `delta -> 0` approaches
/// uniform spacing. The default sharpness used throughout is 4.
pub fn make_schedule(t: usize, delta: f64) -> Result<AnnealSchedule> {
    if t < 2 {
        return Err(Error::InvalidArgument(format!(
            "schedule needs at least two temperatures, got {t}"
        )));
    }
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "schedule sharpness must be positive and finite, got {delta}"
        )));
    }
    let span = (t - 1) as f64;
    let raw: Vec<f64> = (0..t)
        .map(|k| logistic(delta * (2.0 * k as f64 / span - 1.0)))
        .collect();
    let lo = raw[0];
    let width = raw[t - 1] - lo;
    let betas: Vec<f64> = raw.iter().map(|&r| (r - lo) / width).collect();
    if betas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!(
            "sharpness {delta} cannot resolve {t} distinct temperatures"
        )));
    }
    Ok(AnnealSchedule { delta, betas })
}

/// Knobs shared by both annealing directions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub chains: usize,
    /// Warm-up length per chain, split evenly between adaptation at
    /// `beta = 0.5` and equilibration at the starting temperature.
    pub warmup_iters: usize,
    pub max_tree_depth: usize,
    pub target_accept: f64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            chains: 16,
            warmup_iters: 1000,
            max_tree_depth: 10,
            target_accept: 0.8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

/// Per-chain record of one annealing run, kept for post-hoc analysis.
///
/// `chain_log_weights` holds every chain's reported log weight, already
/// sign-corrected so each entry estimates `ln Z` directly in both
/// directions. Non-finite entries are excluded from the estimate and
/// counted in `excluded_chains`.
#[derive(Clone, Debug, Serialize)]
pub struct AnnealingRun {
    pub direction: Direction,
    pub chains: usize,
    pub warmup_iters: usize,
    pub temperatures: usize,
    pub chain_log_weights: Vec<f64>,
    pub excluded_chains: usize,
}

/// Walk one chain along `betas` and return its accumulated log weight.
///
/// Warm-up happens in two halves: the step size and diagonal mass are
/// adapted on the half-tempered target, then frozen while the chain
/// equilibrates at `betas[0]`. The annealing pass itself reuses the frozen
/// kernel for one transition per intermediate temperature. Between rungs the
/// cached likelihood value and gradient are rescaled instead of re-evaluated,
/// so the ladder costs no target calls beyond the transitions themselves.
fn anneal_chain<T: BoxPriorTarget + ?Sized>(
    target: &T,
    betas: &[f64],
    cfg: &AnnealConfig,
    seed: u64,
) -> Result<(f64, EvalLedger)> {
    let dim = target.dim();
    let mut rng = rng_from_seed(seed);
    let mut ledger = EvalLedger::new();
    let stage1 = cfg.warmup_iters / 2;
    let stage2 = cfg.warmup_iters - stage1;

    let half = TemperedTarget::new(target, 0.5);
    let adapted = adapt_chain(
        &half,
        stage1,
        cfg.max_tree_depth,
        cfg.target_accept,
        &mut rng,
        &mut ledger,
    )?;
    let kernel = adapted.kernel;
    let mut q = adapted.q;
    let mut grad = adapted.grad;

    let start = TemperedTarget::new(target, betas[0]);
    ledger.add_likelihood(1);
    ledger.add_gradient(1);
    let mut logp = start.log_prob_grad(&q, &mut grad);
    for _ in 0..stage2 {
        kernel.transition(&start, &mut q, &mut logp, &mut grad, &mut rng, &mut ledger);
    }

    let mut grad_l = vec![0.0; dim];
    ledger.add_likelihood(1);
    ledger.add_gradient(1);
    let mut ln_l = target.log_likelihood_grad(&q, &mut grad_l);
    let ln_v = target.log_prior_volume();

    let mut ln_w = 0.0;
    let last = betas.len() - 1;
    for step in 0..last {
        let beta_next = betas[step + 1];
        ln_w += (beta_next - betas[step]) * ln_l;
        if step + 1 == last {
            break;
        }
        let tempered = TemperedTarget::new(target, beta_next);
        let mut logp_t = beta_next * ln_l - ln_v;
        for (g, &gl) in grad.iter_mut().zip(grad_l.iter()) {
            *g = beta_next * gl;
        }
        kernel.transition(
            &tempered,
            &mut q,
            &mut logp_t,
            &mut grad,
            &mut rng,
            &mut ledger,
        );
        ln_l = (logp_t + ln_v) / beta_next;
        for (gl, &g) in grad_l.iter_mut().zip(grad.iter()) {
            *gl = g / beta_next;
        }
    }
    Ok((ln_w, ledger))
}

fn run_direction<T: BoxPriorTarget + ?Sized>(
    target: &T,
    schedule: &AnnealSchedule,
    cfg: &AnnealConfig,
    seed: u64,
    direction: Direction,
) -> Result<(EvidenceEstimate, AnnealingRun)> {
    if cfg.chains < 2 {
        return Err(Error::InvalidArgument(format!(
            "annealing needs at least two chains for a standard error, got {}",
            cfg.chains
        )));
    }
    if cfg.warmup_iters < 4 {
        return Err(Error::InvalidArgument(format!(
            "warm-up of {} iterations is too short to split into two stages",
            cfg.warmup_iters
        )));
    }

    let mut betas = schedule.betas.clone();
    let (method, stream) = match direction {
        Direction::Forward => (Method::Ais, 0x4149_5346),
        Direction::Reverse => (Method::Rais, 0x5241_4953),
    };
    if direction == Direction::Reverse {
        betas.reverse();
    }
    let dir_seed = derive_seed(seed, stream);

    let outcomes: Vec<Result<(f64, EvalLedger)>> = (0..cfg.chains)
        .into_par_iter()
        .map(|chain| anneal_chain(target, &betas, cfg, derive_seed(dir_seed, chain as u64)))
        .collect();

    let mut evals = EvalLedger::new();
    let mut weights = Vec::with_capacity(cfg.chains);
    for outcome in outcomes {
        let (ln_w, chain_evals) = outcome?;
        evals.merge(&chain_evals);
        weights.push(match direction {
            Direction::Forward => ln_w,
            Direction::Reverse => -ln_w,
        });
    }

    let finite: Vec<f64> = weights.iter().copied().filter(|w| w.is_finite()).collect();
    let excluded = weights.len() - finite.len();
    if excluded > 0 {
        log::warn!("excluded {excluded} annealing chains with non-finite log weights");
    }
    if finite.len() < 2 {
        return Err(Error::EstimationFailure(
            "fewer than two annealing chains produced finite log weights".into(),
        ));
    }

    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let var = finite.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);

    let estimate = EvidenceEstimate {
        method,
        ln_z: mean,
        // spread of the per-chain bounds, so this is the error of the bound
        // rather than of ln Z itself
        std_err: (var / n).sqrt(),
        n_p: finite.len(),
        n_q: 0,
        tau_f2: None,
        evals,
    };
    let run = AnnealingRun {
        direction,
        chains: cfg.chains,
        warmup_iters: cfg.warmup_iters,
        temperatures: schedule.len(),
        chain_log_weights: weights,
        excluded_chains: excluded,
    };
    Ok((estimate, run))
}

/// Forward annealing: prior to posterior. The mean per-chain log weight is a
/// stochastic lower bound on `ln Z`.
pub fn ais<T: BoxPriorTarget + ?Sized>(
    target: &T,
    schedule: &AnnealSchedule,
    cfg: &AnnealConfig,
    seed: u64,
) -> Result<(EvidenceEstimate, AnnealingRun)> {
    run_direction(target, schedule, cfg, seed, Direction::Forward)
}

/// Reverse annealing: posterior to prior. The reported estimate flips the
/// sign of the accumulated weights, giving a stochastic upper bound on `ln Z`.
pub fn rais<T: BoxPriorTarget + ?Sized>(
    target: &T,
    schedule: &AnnealSchedule,
    cfg: &AnnealConfig,
    seed: u64,
) -> Result<(EvidenceEstimate, AnnealingRun)> {
    run_direction(target, schedule, cfg, seed, Direction::Reverse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::synthetic::{GaussianBump1D, UniformBox};

    #[test]
    fn two_point_schedule_is_the_endpoints() {
        for delta in [0.5, 4.0, 11.0] {
            let s = make_schedule(2, delta).unwrap();
            assert_eq!(s.betas, vec![0.0, 1.0]);
        }
    }

    #[test]
    fn three_point_schedule_has_an_exact_midpoint() {
        let s = make_schedule(3, 4.0).unwrap();
        assert_eq!(s.betas[0], 0.0);
        assert!((s.betas[1] - 0.5).abs() < 1e-15);
        assert_eq!(s.betas[2], 1.0);
    }

    #[test]
    fn five_point_schedule_matches_direct_evaluation() {
        let s = make_schedule(5, 4.0).unwrap();
        let expected = (logistic(-2.0) - logistic(-4.0)) / (logistic(4.0) - logistic(-4.0));
        assert!((s.betas[1] - expected).abs() < 1e-15);
        assert!((s.betas[1] + s.betas[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schedules_are_symmetric_increasing_and_pinned() {
        for t in [2usize, 3, 5, 8, 13, 100] {
            for delta in [0.5, 4.0, 9.0] {
                let s = make_schedule(t, delta).unwrap();
                assert_eq!(s.len(), t);
                assert_eq!(s.betas[0], 0.0);
                assert_eq!(s.betas[t - 1], 1.0);
                for w in s.betas.windows(2) {
                    assert!(w[1] > w[0]);
                }
                for k in 0..t {
                    assert!((s.betas[k] + s.betas[t - 1 - k] - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn schedule_rejects_bad_arguments() {
        assert!(make_schedule(0, 4.0).is_err());
        assert!(make_schedule(1, 4.0).is_err());
        assert!(make_schedule(3, 0.0).is_err());
        assert!(make_schedule(3, -1.0).is_err());
        assert!(make_schedule(3, f64::NAN).is_err());
    }

    #[test]
    fn flat_likelihood_gives_exactly_zero_weights() {
        let target = UniformBox {
            lo: vec![-1.0, 0.0],
            hi: vec![2.0, 5.0],
        };
        let schedule = make_schedule(12, 4.0).unwrap();
        let cfg = AnnealConfig {
            chains: 4,
            warmup_iters: 40,
            ..AnnealConfig::default()
        };
        for run in [
            ais(&target, &schedule, &cfg, 11).unwrap(),
            rais(&target, &schedule, &cfg, 11).unwrap(),
        ] {
            let (est, record) = run;
            assert_eq!(est.ln_z, 0.0);
            assert_eq!(est.std_err, 0.0);
            assert!(record.chain_log_weights.iter().all(|&w| w == 0.0));
            assert_eq!(record.excluded_chains, 0);
        }
    }

    #[test]
    fn gaussian_bump_ais_matches_the_closed_form() {
        let target = GaussianBump1D {
            sigma: 0.8,
            lo: -4.0,
            hi: 4.0,
        };
        let schedule = make_schedule(100, 4.0).unwrap();
        let cfg = AnnealConfig {
            chains: 16,
            warmup_iters: 200,
            ..AnnealConfig::default()
        };
        let (est, record) = ais(&target, &schedule, &cfg, 2024).unwrap();
        assert_eq!(record.excluded_chains, 0);
        assert!(est.std_err > 0.0);
        assert!(
            (est.ln_z - target.ln_z()).abs() < 3.0 * est.std_err,
            "ln_z {} vs truth {} with std_err {}",
            est.ln_z,
            target.ln_z(),
            est.std_err
        );
    }

    #[test]
    fn coarse_ladders_bracket_the_truth() {
        let target = GaussianBump1D {
            sigma: 0.25,
            lo: -4.0,
            hi: 4.0,
        };
        let truth = target.ln_z();
        let schedule = make_schedule(8, 4.0).unwrap();
        let cfg = AnnealConfig {
            chains: 4,
            warmup_iters: 64,
            ..AnnealConfig::default()
        };
        let reps = 24;
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for rep in 0..reps {
            lower.push(ais(&target, &schedule, &cfg, 500 + rep).unwrap().0.ln_z);
            upper.push(rais(&target, &schedule, &cfg, 900 + rep).unwrap().0.ln_z);
        }
        let se = |v: &[f64]| {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            (m, (var / n).sqrt())
        };
        let (mean_lower, se_lower) = se(&lower);
        let (mean_upper, se_upper) = se(&upper);
        assert!(
            mean_lower <= truth + se_lower,
            "lower bound {mean_lower} (se {se_lower}) should sit below {truth}"
        );
        assert!(
            mean_upper >= truth - se_upper,
            "upper bound {mean_upper} (se {se_upper}) should sit above {truth}"
        );
    }

    #[test]
    fn finer_ladders_shrink_the_bias() {
        let target = GaussianBump1D {
            sigma: 0.25,
            lo: -4.0,
            hi: 4.0,
        };
        let truth = target.ln_z();
        let cfg = AnnealConfig {
            chains: 8,
            warmup_iters: 100,
            ..AnnealConfig::default()
        };
        let bias = |t: usize| {
            let schedule = make_schedule(t, 4.0).unwrap();
            let reps = 8;
            let mean: f64 = (0..reps)
                .map(|rep| ais(&target, &schedule, &cfg, 3000 + rep).unwrap().0.ln_z)
                .sum::<f64>()
                / reps as f64;
            (mean - truth).abs()
        };
        assert!(bias(1000) < bias(100));
    }

    #[test]
    fn runs_are_deterministic_in_the_seed() {
        let target = GaussianBump1D {
            sigma: 0.6,
            lo: -3.0,
            hi: 3.0,
        };
        let schedule = make_schedule(20, 4.0).unwrap();
        let cfg = AnnealConfig {
            chains: 3,
            warmup_iters: 32,
            ..AnnealConfig::default()
        };
        let (a, ra) = ais(&target, &schedule, &cfg, 77).unwrap();
        let (b, rb) = ais(&target, &schedule, &cfg, 77).unwrap();
        assert_eq!(a.ln_z, b.ln_z);
        assert_eq!(ra.chain_log_weights, rb.chain_log_weights);
        let (c, _) = ais(&target, &schedule, &cfg, 78).unwrap();
        assert_ne!(a.ln_z, c.ln_z);
        let (d, _) = rais(&target, &schedule, &cfg, 77).unwrap();
        assert_ne!(a.ln_z, d.ln_z);
    }

    #[test]
    fn config_preconditions_are_enforced() {
        let target = UniformBox {
            lo: vec![0.0],
            hi: vec![1.0],
        };
        let schedule = make_schedule(4, 4.0).unwrap();
        let mut cfg = AnnealConfig {
            chains: 1,
            ..AnnealConfig::default()
        };
        assert!(ais(&target, &schedule, &cfg, 1).is_err());
        cfg.chains = 4;
        cfg.warmup_iters = 2;
        assert!(ais(&target, &schedule, &cfg, 1).is_err());
    }
}
