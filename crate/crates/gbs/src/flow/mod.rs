//! Iterative normalizing transform built from rotations and monotone
//! one-dimensional maps.
//!
//! Each layer rotates the data onto a basis of successively least Gaussian
//! projections, then Gaussianizes every coordinate marginally. Stacking a few
//! such layers turns the empirical distribution into something close to a
//! standard normal, and the exact change of variables gives a normalized
//! density for the fitted map.

mod direction;
mod monotone;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

use direction::DirectionFinder;
use monotone::MonotoneMap1D;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Number of rotation and marginal-map layers.
    pub n_layers: usize,
    /// Spline knots per one-dimensional map.
    pub n_knots: usize,
    /// Random candidate directions scored per layer, spread over the axes of
    /// the rotation on top of the principal axes.
    pub n_directions: usize,
    /// Multiplier on the automatic kernel bandwidth.
    pub bandwidth_factor: f64,
    /// Lower bound on map derivatives.
    pub slope_floor: f64,
    /// Refuse to fit with fewer than this many samples per dimension.
    pub min_samples_per_dim: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            n_layers: 10,
            n_knots: 128,
            n_directions: 64,
            bandwidth_factor: 0.5,
            slope_floor: 1e-6,
            min_samples_per_dim: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FlowLayer {
    rotation: Array2<f64>,
    maps: Vec<MonotoneMap1D>,
}

/// Fitted transform with an exactly normalized density.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowModel {
    dim: usize,
    layers: Vec<FlowLayer>,
}

impl FlowModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Fit from sample rows. Deterministic for a given seed.
    pub fn fit(samples: &ArrayView2<f64>, cfg: &FlowConfig, seed: u64) -> Result<Self> {
        let n = samples.nrows();
        let dim = samples.ncols();
        if dim == 0 {
            return Err(Error::InvalidArgument("zero-dimensional samples".into()));
        }
        if n < cfg.min_samples_per_dim * dim {
            return Err(Error::DegenerateSamples(format!(
                "{n} samples for {dim} dimensions; need at least {}",
                cfg.min_samples_per_dim * dim
            )));
        }
        if cfg.n_layers == 0 {
            return Err(Error::InvalidArgument("n_layers must be positive".into()));
        }

        let mut rng = rng_from_seed(seed);
        let finder = DirectionFinder::new(n);
        let mut data = samples.to_owned();
        let mut layers = Vec::with_capacity(cfg.n_layers);

        for layer_idx in 0..cfg.n_layers {
            let rotation = if dim == 1 {
                Array2::eye(1)
            } else {
                finder.basis(&data.view(), cfg.n_directions, &mut rng)
            };
            data = data.dot(&rotation.t());

            let mut maps = Vec::with_capacity(dim);
            for j in 0..dim {
                let col: Vec<f64> = data.column(j).to_vec();
                let map = MonotoneMap1D::fit(
                    &col,
                    cfg.n_knots,
                    cfg.bandwidth_factor,
                    cfg.slope_floor,
                )
                .map_err(|e| {
                    Error::DegenerateSamples(format!(
                        "layer {layer_idx}, coordinate {j}: {e}"
                    ))
                })?;
                for v in data.column_mut(j).iter_mut() {
                    *v = map.forward(*v);
                }
                maps.push(map);
            }
            layers.push(FlowLayer { rotation, maps });
        }

        Ok(Self { dim, layers })
    }

    /// Map a point to latent space; returns the image and the log absolute
    /// Jacobian determinant of the whole transform.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, f64) {
        assert_eq!(x.len(), self.dim);
        let mut u = x.to_vec();
        let mut log_det = 0.0;
        let mut rotated = vec![0.0; self.dim];
        for layer in &self.layers {
            for (i, row) in layer.rotation.rows().into_iter().enumerate() {
                rotated[i] = row.iter().zip(&u).map(|(r, v)| r * v).sum();
            }
            for (j, map) in layer.maps.iter().enumerate() {
                let (val, deriv) = map.forward_with_deriv(rotated[j]);
                u[j] = val;
                log_det += deriv.ln();
            }
        }
        (u, log_det)
    }

    /// Invert the transform: latent point to data space.
    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.dim);
        let mut u = z.to_vec();
        let mut unrotated = vec![0.0; self.dim];
        for layer in self.layers.iter().rev() {
            for (j, map) in layer.maps.iter().enumerate() {
                u[j] = map.inverse(u[j]);
            }
            // rotation rows are orthonormal, so the inverse is the transpose
            for (i, val) in unrotated.iter_mut().enumerate() {
                *val = layer
                    .rotation
                    .column(i)
                    .iter()
                    .zip(&u)
                    .map(|(r, v)| r * v)
                    .sum();
            }
            u.copy_from_slice(&unrotated);
        }
        u
    }

    /// Normalized log density of the fitted distribution at `x`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let (z, log_det) = self.forward(x);
        let sq: f64 = z.iter().map(|v| v * v).sum();
        -0.5 * self.dim as f64 * LN_2PI - 0.5 * sq + log_det
    }

    /// Draw `n` points with their log densities. The densities are obtained
    /// from [`log_density`](Self::log_density) on the drawn points, so they
    /// agree with later evaluations to the last bit.
    pub fn sample(&self, n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng: Rng = rng_from_seed(seed);
        let mut draws = Array2::zeros((n, self.dim));
        let mut log_q = Vec::with_capacity(n);
        let mut z = vec![0.0; self.dim];
        for i in 0..n {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let x = self.inverse(&z);
            log_q.push(self.log_density(&x));
            for (j, v) in x.into_iter().enumerate() {
                draws[[i, j]] = v;
            }
        }
        (draws, log_q)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.dim == 0 || model.layers.iter().any(|l| l.maps.len() != model.dim) {
            return Err(Error::InvalidArgument(
                "inconsistent serialized flow".into(),
            ));
        }
        Ok(model)
    }
}
