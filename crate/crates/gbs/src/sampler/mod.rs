//! No-U-turn sampling with multinomial trajectory selection.
//!
//! `sample` runs independent chains with dual-averaging step size adaptation
//! and a diagonal mass matrix estimated during warm-up, then returns the
//! post-warm-up draws together with cached log densities and an evaluation
//! ledger. Everything is driven by explicit seeds: a `(target, config, seed)`
//! triple reproduces the batch bit for bit regardless of thread scheduling.

mod nuts;

pub(crate) use nuts::adapt_chain;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;

use crate::density::{BoxPriorTarget, EvalLedger, LogDensity};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Tuning knobs for [`sample`].
#[derive(Clone, Debug)]
pub struct SamplerConfig {
    /// Number of independent chains.
    pub n_chains: usize,
    /// Iterations per chain, warm-up included.
    pub n_iters: usize,
    /// Fraction of `n_iters` spent on warm-up.
    pub warmup_frac: f64,
    /// Dual-averaging acceptance target.
    pub target_accept: f64,
    /// Cap on trajectory doublings per transition.
    pub max_tree_depth: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 8,
            n_iters: 2500,
            warmup_frac: 0.2,
            target_accept: 0.8,
            max_tree_depth: 10,
        }
    }
}

impl SamplerConfig {
    pub fn warmup_iters(&self) -> usize {
        (self.warmup_frac * self.n_iters as f64).floor() as usize
    }

    pub fn kept_iters(&self) -> usize {
        self.n_iters - self.warmup_iters()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::InvalidArgument("n_chains must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::InvalidArgument(
                "warmup_frac must lie in [0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.target_accept) || self.target_accept <= 0.0 {
            return Err(Error::InvalidArgument(
                "target_accept must lie in (0, 1)".into(),
            ));
        }
        if self.max_tree_depth == 0 || self.max_tree_depth > 20 {
            return Err(Error::InvalidArgument(
                "max_tree_depth must lie in 1..=20".into(),
            ));
        }
        let warmup = self.warmup_iters();
        if warmup < 8 {
            return Err(Error::InvalidArgument(format!(
                "warm-up of {warmup} iterations is too short to adapt anything"
            )));
        }
        if warmup < 100 {
            log::warn!("warm-up of only {warmup} iterations; adaptation may be poor");
        }
        if self.kept_iters() == 0 {
            return Err(Error::InvalidArgument(
                "configuration keeps zero post-warm-up draws".into(),
            ));
        }
        Ok(())
    }
}

/// Post-warm-up draws of a single chain.
#[derive(Clone, Debug)]
pub struct ChainDraws {
    /// Kept draws, one row per iteration.
    pub samples: Array2<f64>,
    /// Cached log density of every kept draw, in iteration order.
    pub logp: Vec<f64>,
    /// Step size frozen at the end of warm-up.
    pub step_size: f64,
    /// Adapted mass diagonal (marginal precision scale).
    pub mass_diag: Vec<f64>,
    /// Divergent transitions after warm-up.
    pub divergences: u64,
    /// Divergent transitions during warm-up.
    pub warmup_divergences: u64,
    /// Evaluations spent by this chain, warm-up included.
    pub ledger: EvalLedger,
}

/// Draws from all chains of one sampling run.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub dim: usize,
    pub chains: Vec<ChainDraws>,
    /// Total evaluations across chains.
    pub ledger: EvalLedger,
}

impl SampleBatch {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.logp.len())
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.logp.len()).sum()
    }

    /// Total post-warm-up divergences.
    pub fn divergences(&self) -> u64 {
        self.chains.iter().map(|c| c.divergences).sum()
    }

    /// All draws stacked into one `(n, dim)` matrix, chain by chain.
    pub fn flattened(&self) -> Array2<f64> {
        let n = self.total_draws();
        let mut out = Array2::zeros((n, self.dim));
        let mut row = 0;
        for chain in &self.chains {
            for r in chain.samples.outer_iter() {
                out.row_mut(row).assign(&r);
                row += 1;
            }
        }
        out
    }

    /// Cached log densities in the same order as [`Self::flattened`].
    pub fn logp_flattened(&self) -> Vec<f64> {
        self.chains
            .iter()
            .flat_map(|c| c.logp.iter().copied())
            .collect()
    }

    /// Split every chain's draws into first and second halves, preserving the
    /// chain structure on both sides. The ledger stays with the parent; the
    /// halves carry empty ledgers so nothing is counted twice.
    pub fn split_halves(&self) -> (SampleBatch, SampleBatch) {
        let mut first = Vec::with_capacity(self.chains.len());
        let mut second = Vec::with_capacity(self.chains.len());
        for chain in &self.chains {
            let n = chain.logp.len();
            let half = n / 2;
            let mk = |range: std::ops::Range<usize>| ChainDraws {
                samples: chain.samples.slice(ndarray::s![range.clone(), ..]).to_owned(),
                logp: chain.logp[range].to_vec(),
                step_size: chain.step_size,
                mass_diag: chain.mass_diag.clone(),
                divergences: 0,
                warmup_divergences: 0,
                ledger: EvalLedger::new(),
            };
            first.push(mk(0..half));
            second.push(mk(half..2 * half));
        }
        (
            SampleBatch {
                dim: self.dim,
                chains: first,
                ledger: EvalLedger::new(),
            },
            SampleBatch {
                dim: self.dim,
                chains: second,
                ledger: EvalLedger::new(),
            },
        )
    }

    /// Build a batch from raw per-chain draws and cached log densities.
    /// Intended for synthetic inputs; callers must pass coherent caches.
    pub fn from_parts(dim: usize, chains: Vec<(Array2<f64>, Vec<f64>)>) -> Self {
        let chains = chains
            .into_iter()
            .map(|(samples, logp)| {
                assert_eq!(samples.nrows(), logp.len());
                assert_eq!(samples.ncols(), dim);
                ChainDraws {
                    samples,
                    logp,
                    step_size: f64::NAN,
                    mass_diag: vec![1.0; dim],
                    divergences: 0,
                    warmup_divergences: 0,
                    ledger: EvalLedger::new(),
                }
            })
            .collect();
        SampleBatch {
            dim,
            chains,
            ledger: EvalLedger::new(),
        }
    }
}

/// Run NUTS chains against `target`: parallel per-chain warm-up, then every
/// chain samples with the kernel pooled across all warm-ups.
pub fn sample<D: LogDensity>(target: &D, cfg: &SamplerConfig, seed: u64) -> Result<SampleBatch> {
    cfg.validate()?;
    let dim = target.dim();
    let warmed: Vec<Result<nuts::WarmedChain>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|chain_idx| {
            let chain_seed = derive_seed(seed, chain_idx as u64);
            nuts::warm_chain(target, cfg, chain_seed)
        })
        .collect();
    let warmed: Vec<nuts::WarmedChain> = warmed.into_iter().collect::<Result<_>>()?;
    let kernel = nuts::pool_kernels(target, &warmed);
    let chains: Vec<ChainDraws> = warmed
        .into_par_iter()
        .map(|w| nuts::run_frozen(target, cfg, &kernel, w))
        .collect();
    let mut ledger = EvalLedger::new();
    for c in &chains {
        ledger.merge(&c.ledger);
    }
    Ok(SampleBatch { dim, chains, ledger })
}

/// Draw `n` points uniformly from the prior box of `target`.
pub fn prior_sample<T: BoxPriorTarget + ?Sized>(target: &T, n: usize, seed: u64) -> Array2<f64> {
    let (lo, hi) = target.bounds();
    let dim = lo.len();
    let mut rng = rng_from_seed(seed);
    let mut out = Array2::zeros((n, dim));
    for mut row in out.outer_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = rng.random_range(lo[j]..hi[j]);
        }
    }
    out
}
