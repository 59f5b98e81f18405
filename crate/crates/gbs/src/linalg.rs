//! Small dense linear algebra helpers shared by targets, flows and warps.
//!
//! Samples move around as `ndarray` matrices; factorizations go through
//! nalgebra at the boundary. Dimensions stay modest (at most a few dozen), so
//! conversion costs are irrelevant.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::Rng;

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(a.nrows(), a.ncols(), a.iter().copied())
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Haar-distributed rotation (determinant +1) from a seeded Gaussian matrix.
///
/// QR of a Gaussian matrix with the R diagonal sign-fixed gives a Haar
/// orthogonal matrix; flipping the last column when needed lands it in SO(n).
pub fn random_rotation(dim: usize, rng: &mut Rng) -> Array2<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    if q.determinant() < 0.0 {
        let last = dim - 1;
        for i in 0..dim {
            q[(i, last)] = -q[(i, last)];
        }
    }
    from_na(&q)
}

/// Complete `first_row` (a unit vector) to a full orthonormal basis, returned
/// as a matrix whose rows are the basis vectors. The remaining rows come from
/// Gram-Schmidt over seeded Gaussian draws, with re-orthogonalization.
pub fn complete_orthonormal(first_row: &[f64], rng: &mut Rng) -> Result<Array2<f64>> {
    let dim = first_row.len();
    let norm = first_row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 1e-12) {
        return Err(Error::InvalidArgument(
            "direction vector must be nonzero and finite".into(),
        ));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    rows.push(first_row.iter().map(|v| v / norm).collect());
    'outer: while rows.len() < dim {
        for _attempt in 0..64 {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            // two Gram-Schmidt sweeps keep orthogonality near machine precision
            for _ in 0..2 {
                for row in &rows {
                    let dot: f64 = v.iter().zip(row).map(|(a, b)| a * b).sum();
                    for (vi, ri) in v.iter_mut().zip(row) {
                        *vi -= dot * ri;
                    }
                }
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-8 {
                for vi in v.iter_mut() {
                    *vi /= n;
                }
                rows.push(v);
                continue 'outer;
            }
        }
        return Err(Error::LinAlg(
            "could not complete orthonormal basis from random draws".into(),
        ));
    }
    let mut out = Array2::zeros((dim, dim));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Sample mean of the rows.
pub fn row_mean(samples: &ArrayView2<f64>) -> Array1<f64> {
    let n = samples.nrows() as f64;
    samples.sum_axis(ndarray::Axis(0)) / n
}

/// Sample covariance of the rows (denominator n - 1).
pub fn covariance(samples: &ArrayView2<f64>) -> Array2<f64> {
    let (n, d) = samples.dim();
    assert!(n >= 2, "covariance needs at least two rows");
    let mean = row_mean(samples);
    let mut cov = Array2::zeros((d, d));
    for row in samples.outer_iter() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(cov: &Array2<f64>) -> Result<Array2<f64>> {
    let chol = to_na(cov)
        .cholesky()
        .ok_or_else(|| Error::LinAlg("covariance is not positive definite".into()))?;
    Ok(from_na(&chol.l()))
}

/// Eigenvectors of a symmetric matrix, one per row, sorted by descending
/// eigenvalue.
pub fn symmetric_eigvecs(mat: &Array2<f64>) -> Array2<f64> {
    let eig = nalgebra::SymmetricEigen::new(to_na(mat));
    let mut order: Vec<usize> = (0..mat.nrows()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let d = mat.nrows();
    let mut out = Array2::zeros((d, d));
    for (row, &k) in order.iter().enumerate() {
        for i in 0..d {
            out[(row, i)] = eig.eigenvectors[(i, k)];
        }
    }
    out
}

/// Solve `L y = b` for lower triangular `L`.
pub fn solve_lower(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let d = b.len();
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * y[j];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::array;

    fn assert_orthogonal(q: &Array2<f64>, tol: f64) {
        let qt = q.t();
        let prod = q.dot(&qt);
        let d = q.nrows();
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (prod[(i, j)] - want).abs() < tol,
                    "Q Q^T deviates at ({i},{j}): {}",
                    prod[(i, j)]
                );
            }
        }
    }

    #[test]
    fn random_rotation_is_special_orthogonal() {
        let mut rng = rng_from_seed(11);
        for dim in [2, 5, 32] {
            let q = random_rotation(dim, &mut rng);
            assert_orthogonal(&q, 1e-10);
            let det = to_na(&q).determinant();
            assert!((det - 1.0).abs() < 1e-8, "det = {det}");
        }
    }

    #[test]
    fn completion_preserves_first_row() {
        let mut rng = rng_from_seed(5);
        let dir = vec![0.6, 0.0, -0.8];
        let q = complete_orthonormal(&dir, &mut rng).unwrap();
        assert_orthogonal(&q, 1e-10);
        for (j, &v) in dir.iter().enumerate() {
            assert!((q[(0, j)] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_and_cholesky_round_trip() {
        let mut rng = rng_from_seed(3);
        let l_true = array![[2.0, 0.0], [0.6, 0.5]];
        let mut samples = Array2::zeros((20_000, 2));
        for mut row in samples.outer_iter_mut() {
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            row[0] = 2.0 * z0;
            row[1] = 0.6 * z0 + 0.5 * z1;
        }
        let cov = covariance(&samples.view());
        let l = cholesky_lower(&cov).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((l[(i, j)] - l_true[(i, j)]).abs() < 0.05);
            }
        }
        let y = solve_lower(&l, &[1.0, 1.0]);
        let back = [l[(0, 0)] * y[0], l[(1, 0)] * y[0] + l[(1, 1)] * y[1]];
        assert!((back[0] - 1.0).abs() < 1e-12 && (back[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigvecs_recover_principal_axes() {
        let cov = array![[4.0, 0.0], [0.0, 1.0]];
        let v = symmetric_eigvecs(&cov);
        assert!(v[(0, 0)].abs() > 0.999);
        assert!(v[(1, 1)].abs() > 0.999);
    }
}
