//! The transition kernel: multinomial no-U-turn trees over a leapfrog
//! integrator, with dual-averaging step size adaptation during warm-up.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::density::{EvalLedger, LogDensity};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::sampler::{ChainDraws, SamplerConfig};

/// Energy gap beyond which a transition counts as divergent.
const DELTA_MAX: f64 = 1000.0;

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

/// One phase-space point with cached density and gradient.
#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

/// Frozen kernel parameters: step size, mass diagonal, tree controls.
///
/// Mass entries are marginal precisions: momenta are drawn as
/// `p_i ~ N(0, m_i)` and the kinetic energy is `sum p_i^2 / (2 m_i)`.
#[derive(Clone, Debug)]
pub(crate) struct NutsKernel {
    pub step_size: f64,
    pub mass: Vec<f64>,
    pub max_depth: usize,
}

/// Outcome of one transition, used for adaptation and diagnostics.
pub(crate) struct Transition {
    pub accept_stat: f64,
    pub divergent: bool,
    #[allow(dead_code)]
    pub depth: usize,
}

struct Tree {
    /// Physically leftmost state of the subtree.
    minus: Point,
    /// Physically rightmost state.
    plus: Point,
    candidate: Point,
    log_sum_w: f64,
    sum_alpha: f64,
    n_alpha: u64,
    turning: bool,
    divergent: bool,
}

impl NutsKernel {
    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p
            .iter()
            .zip(&self.mass)
            .map(|(&pi, &mi)| pi * pi / mi)
            .sum::<f64>()
    }

    fn draw_momentum(&self, rng: &mut Rng, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.mass
                .iter()
                .map(|&mi| mi.sqrt() * rng.sample::<f64, _>(StandardNormal)),
        );
    }

    fn leapfrog<D: LogDensity>(
        &self,
        target: &D,
        from: &Point,
        step: f64,
        ledger: &mut EvalLedger,
    ) -> Point {
        let dim = from.q.len();
        let mut p = from.p.clone();
        for (pi, &gi) in p.iter_mut().zip(&from.grad) {
            *pi += 0.5 * step * gi;
        }
        let mut q = from.q.clone();
        for ((qi, &pi), &mi) in q.iter_mut().zip(&p).zip(&self.mass) {
            *qi += step * pi / mi;
        }
        if let Some((lo, hi)) = target.reflect_bounds() {
            for ((qi, pi), (&a, &b)) in
                q.iter_mut().zip(p.iter_mut()).zip(lo.iter().zip(hi))
            {
                if *qi < a || *qi > b {
                    // fold the overshoot back through the walls; an odd
                    // number of wall crossings flips the momentum
                    let w = b - a;
                    let r = (*qi - a).rem_euclid(2.0 * w);
                    *qi = if r <= w { a + r } else { a + 2.0 * w - r };
                    *qi = qi.clamp(a, b);
                    if r > w {
                        *pi = -*pi;
                    }
                }
            }
        }
        let mut grad = vec![0.0; dim];
        ledger.add_likelihood(1);
        ledger.add_gradient(1);
        let logp = target.log_prob_grad(&q, &mut grad);
        if logp.is_finite() {
            for (pi, &gi) in p.iter_mut().zip(&grad) {
                *pi += 0.5 * step * gi;
            }
        }
        Point { q, p, grad, logp }
    }

    /// U-turn test across a span, with `a` the left end and `b` the right.
    fn span_turning(&self, a: &Point, b: &Point) -> bool {
        let mut dot_a = 0.0;
        let mut dot_b = 0.0;
        for i in 0..a.q.len() {
            let dq = b.q[i] - a.q[i];
            dot_a += dq * a.p[i] / self.mass[i];
            dot_b += dq * b.p[i] / self.mass[i];
        }
        dot_a < 0.0 || dot_b < 0.0
    }

    fn leaf<D: LogDensity>(
        &self,
        target: &D,
        from: &Point,
        step: f64,
        h0: f64,
        ledger: &mut EvalLedger,
    ) -> Tree {
        let point = self.leapfrog(target, from, step, ledger);
        let energy = if point.logp.is_finite() {
            -point.logp + self.kinetic(&point.p)
        } else {
            f64::INFINITY
        };
        let delta = energy - h0;
        let divergent = !delta.is_finite() || delta > DELTA_MAX;
        let alpha = (-delta).exp().min(1.0);
        let log_w = -delta;
        Tree {
            minus: point.clone(),
            plus: point.clone(),
            candidate: point,
            log_sum_w: if divergent { f64::NEG_INFINITY } else { log_w },
            sum_alpha: if alpha.is_finite() { alpha } else { 0.0 },
            n_alpha: 1,
            turning: false,
            divergent,
        }
    }

    fn build_tree<D: LogDensity>(
        &self,
        target: &D,
        from: &Point,
        dir: f64,
        step: f64,
        depth: usize,
        h0: f64,
        rng: &mut Rng,
        ledger: &mut EvalLedger,
    ) -> Tree {
        if depth == 0 {
            return self.leaf(target, from, dir * step, h0, ledger);
        }
        let mut first = self.build_tree(target, from, dir, step, depth - 1, h0, rng, ledger);
        if first.divergent || first.turning {
            return first;
        }
        let far = if dir > 0.0 { &first.plus } else { &first.minus };
        let second = self.build_tree(target, &far.clone(), dir, step, depth - 1, h0, rng, ledger);
        first.sum_alpha += second.sum_alpha;
        first.n_alpha += second.n_alpha;
        if second.divergent || second.turning {
            first.divergent = second.divergent;
            first.turning = second.turning;
            return first;
        }
        let combined = logaddexp(first.log_sum_w, second.log_sum_w);
        // within-subtree multinomial selection
        if (rng.random::<f64>().ln()) < second.log_sum_w - combined {
            first.candidate = second.candidate;
        }
        first.log_sum_w = combined;
        if dir > 0.0 {
            first.plus = second.plus;
        } else {
            first.minus = second.minus;
        }
        first.turning = self.span_turning(&first.minus, &first.plus);
        first
    }

    /// One NUTS update of `state` in place.
    pub(crate) fn transition<D: LogDensity>(
        &self,
        target: &D,
        q: &mut Vec<f64>,
        logp: &mut f64,
        grad: &mut Vec<f64>,
        rng: &mut Rng,
        ledger: &mut EvalLedger,
    ) -> Transition {
        // The local step scale varies across the target, so a fixed step can
        // leave a state where every proposal diverges; jittering down by up to
        // half gives such states an escape route within a few iterations.
        let step = self.step_size * 0.5f64.powf(rng.random::<f64>());
        let mut p = Vec::new();
        self.draw_momentum(rng, &mut p);
        let h0 = -*logp + self.kinetic(&p);
        let start = Point {
            q: q.clone(),
            p,
            grad: grad.clone(),
            logp: *logp,
        };
        let mut minus = start.clone();
        let mut plus = start.clone();
        let mut candidate = start;
        let mut log_sum_w = 0.0f64;
        let mut sum_alpha = 0.0f64;
        let mut n_alpha = 0u64;
        let mut divergent = false;
        let mut depth = 0usize;

        while depth < self.max_depth {
            let dir: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let sub = {
                let from = if dir > 0.0 { plus.clone() } else { minus.clone() };
                self.build_tree(target, &from, dir, step, depth, h0, rng, ledger)
            };
            sum_alpha += sub.sum_alpha;
            n_alpha += sub.n_alpha;
            if sub.divergent || sub.turning {
                divergent = sub.divergent;
                break;
            }
            // biased progressive sampling favours the fresh subtree
            if (rng.random::<f64>().ln()) < sub.log_sum_w - log_sum_w {
                candidate = sub.candidate.clone();
            }
            log_sum_w = logaddexp(log_sum_w, sub.log_sum_w);
            if dir > 0.0 {
                plus = sub.plus;
            } else {
                minus = sub.minus;
            }
            depth += 1;
            if self.span_turning(&minus, &plus) {
                break;
            }
        }

        *q = candidate.q;
        *logp = candidate.logp;
        *grad = candidate.grad;
        Transition {
            accept_stat: if n_alpha > 0 {
                sum_alpha / n_alpha as f64
            } else {
                0.0
            },
            divergent,
            depth,
        }
    }
}

/// Dual-averaging controller for the log step size.
pub(crate) struct DualAverage {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: u64,
    delta: f64,
}

const DA_GAMMA: f64 = 0.05;
const DA_T0: f64 = 10.0;
const DA_KAPPA: f64 = 0.75;

impl DualAverage {
    pub(crate) fn new(eps0: f64, delta: f64) -> Self {
        Self {
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: eps0.ln(),
            h_bar: 0.0,
            t: 0,
            delta,
        }
    }

    pub(crate) fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    pub(crate) fn adapted(&self) -> f64 {
        self.log_eps_bar.exp()
    }

    pub(crate) fn update(&mut self, accept_stat: f64) {
        self.t += 1;
        let t = self.t as f64;
        let frac = 1.0 / (t + DA_T0);
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.delta - accept_stat);
        self.log_eps = self.mu - t.sqrt() / DA_GAMMA * self.h_bar;
        let eta = t.powf(-DA_KAPPA);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
    }
}

/// Crude bisection-style search for a step size with acceptance near one half.
pub(crate) fn find_initial_step<D: LogDensity>(
    kernel: &NutsKernel,
    target: &D,
    q: &[f64],
    logp: f64,
    grad: &[f64],
    rng: &mut Rng,
    ledger: &mut EvalLedger,
) -> f64 {
    let mut eps = 1.0f64;
    let mut p = Vec::new();
    kernel.draw_momentum(rng, &mut p);
    let h0 = -logp + kernel.kinetic(&p);
    let start = Point {
        q: q.to_vec(),
        p,
        grad: grad.to_vec(),
        logp,
    };
    let accept_ratio = |kernel: &NutsKernel, eps: f64, ledger: &mut EvalLedger| -> f64 {
        let next = kernel.leapfrog(target, &start, eps, ledger);
        if !next.logp.is_finite() {
            return f64::NEG_INFINITY;
        }
        let h1 = -next.logp + kernel.kinetic(&next.p);
        h0 - h1
    };
    let first = accept_ratio(kernel, eps, ledger);
    let dir: f64 = if first > (0.5f64).ln() { 1.0 } else { -1.0 };
    for _ in 0..64 {
        let log_ratio = accept_ratio(kernel, eps, ledger);
        if dir > 0.0 && log_ratio <= (0.5f64).ln() {
            break;
        }
        if dir < 0.0 && log_ratio >= (0.5f64).ln() {
            break;
        }
        eps *= 2.0f64.powf(dir);
        if !(1e-10..=1e6).contains(&eps) {
            break;
        }
    }
    eps.clamp(1e-10, 1e6)
}

/// Regularized marginal precisions from collected warm-up positions.
fn estimate_mass(collected: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let n = collected.len();
    if n < 4 {
        return vec![1.0; dim];
    }
    let nf = n as f64;
    let mut mean = vec![0.0; dim];
    for row in collected {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= nf;
    }
    let mut var = vec![0.0; dim];
    for row in collected {
        for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    var.iter()
        .map(|&s| {
            let raw = s / (nf - 1.0);
            let reg = nf / (nf + 5.0) * raw + 1e-3 * (5.0 / (nf + 5.0));
            (1.0 / reg).clamp(1e-8, 1e8)
        })
        .collect()
}

/// A frozen kernel with the chain state it was adapted on.
pub(crate) struct AdaptedChain {
    pub kernel: NutsKernel,
    pub q: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
    pub warmup_divergences: u64,
}

/// Initialize a chain and run the two-window warm-up: step size by dual
/// averaging throughout, mass re-estimated mid-way and at the end.
pub(crate) fn adapt_chain<D: LogDensity>(
    target: &D,
    warmup: usize,
    max_depth: usize,
    target_accept: f64,
    rng: &mut Rng,
    ledger: &mut EvalLedger,
) -> Result<AdaptedChain> {
    let dim = target.dim();

    // start from a uniform draw over the init region with finite density
    let (lo, hi) = target.init_region();
    let mut q = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut logp = f64::NEG_INFINITY;
    for _ in 0..100 {
        for (v, (a, b)) in q.iter_mut().zip(lo.iter().zip(&hi)) {
            *v = rng.random_range(*a..*b);
        }
        ledger.add_likelihood(1);
        ledger.add_gradient(1);
        logp = target.log_prob_grad(&q, &mut grad);
        if logp.is_finite() {
            break;
        }
    }
    if !logp.is_finite() {
        return Err(Error::SamplerDiagnostic(
            "could not find a finite-density start point".into(),
        ));
    }

    let mut kernel = NutsKernel {
        step_size: 1.0,
        mass: vec![1.0; dim],
        max_depth,
    };

    // On a nearly flat density every step is accepted, so dual averaging
    // alone would grow the step without bound. Cap the drift per step at a
    // few box widths; reflection keeps such trajectories meaningful.
    let step_cap = |mass: &[f64]| -> f64 {
        match target.reflect_bounds() {
            Some((lo, hi)) => lo
                .iter()
                .zip(hi)
                .zip(mass)
                .map(|((&a, &b), &m)| 4.0 * (b - a) * m.sqrt())
                .fold(f64::INFINITY, f64::min),
            None => f64::INFINITY,
        }
    };

    let eps0 = find_initial_step(&kernel, target, &q, logp, &grad, rng, ledger)
        .min(step_cap(&kernel.mass));
    kernel.step_size = eps0;
    let mut da = DualAverage::new(eps0, target_accept);

    let w1 = warmup / 2;
    let mut collected: Vec<Vec<f64>> = Vec::new();
    let mut warmup_divergences = 0u64;

    for t in 0..warmup {
        kernel.step_size = da.current().min(step_cap(&kernel.mass));
        let info = kernel.transition(target, &mut q, &mut logp, &mut grad, rng, ledger);
        if info.divergent {
            warmup_divergences += 1;
        }
        da.update(info.accept_stat);
        if t >= w1 / 2 {
            collected.push(q.clone());
        }
        if t + 1 == w1 {
            // intermediate mass update so the final step size adapts under a
            // realistic metric; the final mass comes from the second half only
            kernel.mass = estimate_mass(&collected, dim);
            collected.clear();
            let eps = da.current().clamp(1e-10, 1e6).min(step_cap(&kernel.mass));
            da = DualAverage::new(eps, target_accept);
        }
    }
    kernel.mass = estimate_mass(&collected, dim);
    kernel.step_size = da.adapted().clamp(1e-10, 1e6).min(step_cap(&kernel.mass));

    if warmup_divergences * 2 > warmup as u64 {
        return Err(Error::SamplerDiagnostic(format!(
            "{warmup_divergences} of {warmup} warm-up transitions diverged; \
             the chain cannot be trusted"
        )));
    }

    Ok(AdaptedChain {
        kernel,
        q,
        logp,
        grad,
        warmup_divergences,
    })
}

/// Drive one full chain: init, two-window warm-up, then frozen sampling.
/// A chain that has finished warm-up and is ready for frozen sampling.
pub(super) struct WarmedChain {
    pub adapted: AdaptedChain,
    pub rng: Rng,
    pub ledger: EvalLedger,
}

/// Initialize and warm up one chain on its own RNG stream.
pub(super) fn warm_chain<D: LogDensity>(
    target: &D,
    cfg: &SamplerConfig,
    chain_seed: u64,
) -> Result<WarmedChain> {
    let mut rng = rng_from_seed(derive_seed(chain_seed, 0));
    let mut ledger = EvalLedger::new();
    let adapted = adapt_chain(
        target,
        cfg.warmup_iters(),
        cfg.max_tree_depth,
        cfg.target_accept,
        &mut rng,
        &mut ledger,
    )?;
    Ok(WarmedChain {
        adapted,
        rng,
        ledger,
    })
}

/// Pool per-chain warm-up results into the one kernel every chain will run
/// with: a low quantile of the step sizes and the coordinate-wise median
/// mass. Per-chain adaptation on a target whose local scale varies can leave
/// individual chains with a step fitted to the wide part of the density,
/// which then rejects every move in the narrow part; the pooled kernel keeps
/// all chains mobile everywhere the more careful chains reached.
pub(super) fn pool_kernels<D: LogDensity>(target: &D, warmed: &[WarmedChain]) -> NutsKernel {
    assert!(!warmed.is_empty());
    let dim = warmed[0].adapted.kernel.mass.len();
    let max_depth = warmed[0].adapted.kernel.max_depth;

    let mut steps: Vec<f64> = warmed
        .iter()
        .map(|w| w.adapted.kernel.step_size)
        .collect();
    steps.sort_by(f64::total_cmp);
    let step_size = steps[(steps.len() - 1) / 4];

    let mut mass = vec![0.0; dim];
    let mut column = vec![0.0; warmed.len()];
    for (i, m) in mass.iter_mut().enumerate() {
        for (c, w) in column.iter_mut().zip(warmed) {
            *c = w.adapted.kernel.mass[i];
        }
        column.sort_by(f64::total_cmp);
        let mid = column.len() / 2;
        *m = if column.len() % 2 == 1 {
            column[mid]
        } else {
            0.5 * (column[mid - 1] + column[mid])
        };
    }

    let mut kernel = NutsKernel {
        step_size,
        mass,
        max_depth,
    };
    if let Some((lo, hi)) = target.reflect_bounds() {
        let cap = lo
            .iter()
            .zip(hi)
            .zip(&kernel.mass)
            .map(|((&a, &b), &m)| 4.0 * (b - a) * m.sqrt())
            .fold(f64::INFINITY, f64::min);
        kernel.step_size = kernel.step_size.min(cap);
    }
    kernel
}

/// Drive the kept iterations of one warmed chain with a frozen kernel.
pub(super) fn run_frozen<D: LogDensity>(
    target: &D,
    cfg: &SamplerConfig,
    kernel: &NutsKernel,
    warmed: WarmedChain,
) -> ChainDraws {
    let dim = target.dim();
    let WarmedChain {
        adapted,
        mut rng,
        mut ledger,
    } = warmed;
    let mut q = adapted.q;
    let mut logp = adapted.logp;
    let mut grad = adapted.grad;

    let kept = cfg.kept_iters();
    let mut samples = Array2::zeros((kept, dim));
    let mut logps = Vec::with_capacity(kept);
    let mut divergences = 0u64;
    for t in 0..kept {
        let info = kernel.transition(target, &mut q, &mut logp, &mut grad, &mut rng, &mut ledger);
        if info.divergent {
            divergences += 1;
        }
        samples.row_mut(t).assign(&ndarray::ArrayView1::from(&q));
        logps.push(logp);
    }

    ChainDraws {
        samples,
        logp: logps,
        step_size: kernel.step_size,
        mass_diag: kernel.mass.clone(),
        divergences,
        warmup_divergences: adapted.warmup_divergences,
        ledger,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::synthetic::StandardGaussian;

    #[test]
    fn leapfrog_energy_error_shrinks_quadratically() {
        let target = StandardGaussian { dim: 2 };
        let kernel = NutsKernel {
            step_size: 0.0,
            mass: vec![1.0; 2],
            max_depth: 10,
        };
        let run = |eps: f64, n_steps: usize| -> f64 {
            let mut point = Point {
                q: vec![1.0, -0.5],
                p: vec![0.3, 0.8],
                grad: vec![-1.0, 0.5],
                logp: -0.5 * (1.0f64 + 0.25),
            };
            let h0 = -point.logp + kernel.kinetic(&point.p);
            let mut ledger = EvalLedger::new();
            let mut max_err = 0.0f64;
            for _ in 0..n_steps {
                point = kernel.leapfrog(&target, &point, eps, &mut ledger);
                let h = -point.logp + kernel.kinetic(&point.p);
                max_err = max_err.max((h - h0).abs());
            }
            max_err
        };
        // fixed trajectory length 2.0, halving the step size
        let coarse = run(0.2, 10);
        let fine = run(0.1, 20);
        assert!(
            coarse / fine >= 3.5,
            "energy error ratio {} below second order",
            coarse / fine
        );
    }

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAverage::new(1.0, 0.8);
        for _ in 0..200 {
            da.update(0.2);
        }
        assert!(da.adapted() < 0.2, "step should shrink, got {}", da.adapted());
        let mut da2 = DualAverage::new(0.01, 0.8);
        for _ in 0..200 {
            da2.update(1.0);
        }
        assert!(da2.adapted() > 0.02, "step should grow, got {}", da2.adapted());
    }

    #[test]
    fn mass_estimate_matches_sample_precision() {
        let mut rng = rng_from_seed(8);
        let collected: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                vec![
                    2.0 * rng.sample::<f64, _>(StandardNormal),
                    0.5 * rng.sample::<f64, _>(StandardNormal),
                ]
            })
            .collect();
        let mass = estimate_mass(&collected, 2);
        assert!((mass[0] - 0.25).abs() < 0.05, "mass[0] = {}", mass[0]);
        assert!((mass[1] - 4.0).abs() < 0.6, "mass[1] = {}", mass[1]);
    }
}
