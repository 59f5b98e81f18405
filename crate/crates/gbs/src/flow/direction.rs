//! Direction scoring for flow layers.
//!
//! Each layer rotates onto a full orthogonal basis chosen greedily so the
//! least Gaussian projections come first: every axis is picked to maximize,
//! within the orthocomplement of the axes before it, the Wasserstein-1
//! distance between the standardized projected values and matching standard
//! normal quantiles. Scoring standardized values keeps the search pointed at
//! shape deviations; plain scale mismatch is already removed by the marginal
//! maps whatever the rotation does.

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::linalg::{covariance, symmetric_eigvecs};
use crate::rng::Rng;

const MAX_SCORE_POINTS: usize = 4096;
const REFINE_STEPS: usize = 8;

/// Quantiles of the standard normal at the midpoint plotting positions for
/// sample size `n`. Computed once per finder and shared by every score call.
pub(crate) fn reference_quantiles(n: usize) -> Vec<f64> {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::standard();
    (0..n)
        .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64))
        .collect()
}

/// W1 distance between the empirical law of `projected` and N(0, 1).
pub(crate) fn w1_to_normal(projected: &mut [f64], reference: &[f64]) -> f64 {
    debug_assert_eq!(projected.len(), reference.len());
    projected.sort_by(|a, b| a.partial_cmp(b).expect("non-finite projection"));
    projected
        .iter()
        .zip(reference)
        .map(|(s, q)| (s - q).abs())
        .sum::<f64>()
        / reference.len() as f64
}

fn random_unit(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Remove the components of `v` along each (orthonormal) row of `basis` and
/// renormalize; returns false when nothing of `v` is left.
fn project_out(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    for row in basis {
        let c = dot(v, row);
        for (vi, ri) in v.iter_mut().zip(row) {
            *vi -= c * ri;
        }
    }
    let norm = dot(v, v).sqrt();
    if norm < 1e-8 {
        return false;
    }
    for vi in v.iter_mut() {
        *vi /= norm;
    }
    true
}

/// Greedy construction of per-layer rotations, reused across layers of one
/// fit so the scoring subsample and normal quantiles are set up only once.
pub(crate) struct DirectionFinder {
    rows: Vec<usize>,
    reference: Vec<f64>,
}

impl DirectionFinder {
    pub(crate) fn new(n_rows: usize) -> Self {
        let m = n_rows.min(MAX_SCORE_POINTS);
        let rows = (0..m).map(|k| k * n_rows / m).collect();
        Self {
            rows,
            reference: reference_quantiles(m),
        }
    }

    /// W1 of the standardized projection of the subsample onto `dir`;
    /// `grad` (when given) receives an ascent direction for it.
    fn score(&self, data: &ArrayView2<f64>, dir: &[f64], grad: Option<&mut Vec<f64>>) -> f64 {
        let m = self.rows.len();
        let mut proj: Vec<(f64, usize)> = self
            .rows
            .iter()
            .map(|&i| (dot(data.row(i).as_slice().unwrap(), dir), i))
            .collect();
        let mean = proj.iter().map(|(p, _)| p).sum::<f64>() / m as f64;
        let var = proj.iter().map(|(p, _)| (p - mean).powi(2)).sum::<f64>() / m as f64;
        let sd = var.sqrt().max(1e-12);
        for (p, _) in proj.iter_mut() {
            *p = (*p - mean) / sd;
        }
        proj.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("non-finite projection"));
        let mut total = 0.0;
        if let Some(g) = grad {
            g.clear();
            g.resize(dir.len(), 0.0);
            for ((z, i), q) in proj.iter().zip(&self.reference) {
                let s = (z - q).signum();
                total += (z - q).abs();
                let row = data.row(*i);
                for (gj, xj) in g.iter_mut().zip(row.iter()) {
                    *gj += s * xj / sd;
                }
            }
            for gj in g.iter_mut() {
                *gj /= m as f64;
            }
        } else {
            for ((z, _), q) in proj.iter().zip(&self.reference) {
                total += (z - q).abs();
            }
        }
        total / m as f64
    }

    /// Full orthogonal rotation with rows ordered from most to least
    /// non-Gaussian. `n_random` random candidates are spread over the axes on
    /// top of the principal axes of the sample covariance.
    pub(crate) fn basis(
        &self,
        data: &ArrayView2<f64>,
        n_random: usize,
        rng: &mut Rng,
    ) -> Array2<f64> {
        let dim = data.ncols();
        let eig = symmetric_eigvecs(&covariance(data));
        let per_slot = (n_random / dim).max(4);
        let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(dim);

        for _slot in 0..dim {
            let mut best: Option<(f64, Vec<f64>)> = None;
            let mut consider = |cand: &mut Vec<f64>, finder: &Self| {
                if !project_out(cand, &chosen) {
                    return;
                }
                let s = finder.score(data, cand, None);
                if best.as_ref().is_none_or(|(bs, _)| s > *bs) {
                    best = Some((s, cand.clone()));
                }
            };
            for row in eig.rows() {
                consider(&mut row.to_vec(), self);
            }
            for _ in 0..per_slot {
                consider(&mut random_unit(dim, rng), self);
            }
            let (mut score, mut dir) =
                best.expect("orthocomplement of fewer than dim rows is nonempty");

            let mut step = 0.3;
            let mut grad = Vec::new();
            for _ in 0..REFINE_STEPS {
                self.score(data, &dir, Some(&mut grad));
                if !project_out(&mut grad, &chosen) {
                    break;
                }
                let mut trial: Vec<f64> = dir
                    .iter()
                    .zip(&grad)
                    .map(|(d, g)| d + step * g)
                    .collect();
                if !project_out(&mut trial, &chosen) {
                    break;
                }
                let trial_score = self.score(data, &trial, None);
                if trial_score > score {
                    score = trial_score;
                    dir = trial;
                } else {
                    step *= 0.5;
                }
            }
            chosen.push(dir);
        }

        // a final Gram-Schmidt pass keeps the product orthonormal to
        // round-off even after the projections above
        let mut rotation = Array2::zeros((dim, dim));
        let mut clean: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for (i, mut row) in chosen.into_iter().enumerate() {
            if !project_out(&mut row, &clean) {
                row = random_unit(dim, rng);
                assert!(project_out(&mut row, &clean), "degenerate basis");
            }
            for (j, v) in row.iter().enumerate() {
                rotation[(i, j)] = *v;
            }
            clean.push(row);
        }
        rotation
    }
}
