//! Closed-form optimal transport map between Gaussian measures,
//! `T(u) = m_V + A (u - m_U)` with
//! `A = S_U^{-1/2} (S_U^{1/2} S_V S_U^{1/2})^{1/2} S_U^{-1/2}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
}

impl GaussianMoments {
    pub fn isotropic(mean: f64, std: f64, dim: usize) -> Self {
        GaussianMoments {
            mean: Array1::from_elem(dim, mean),
            cov: Array2::eye(dim) * (std * std),
        }
    }

    fn check(&self) -> Result<DMatrix<f64>> {
        let n = self.mean.len();
        if self.cov.dim() != (n, n) {
            return Err(Error::ShapeMismatch(format!(
                "covariance {:?} for mean of length {n}",
                self.cov.dim()
            )));
        }
        let scale = self.cov.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (self.cov[[i, j]] - self.cov[[j, i]]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput("covariance is not symmetric".into()));
                }
            }
        }
        Ok(DMatrix::from_fn(n, n, |i, j| self.cov[[i, j]]))
    }
}

/// `Q f(L) Q^T` for a symmetric matrix with eigen-decomposition `Q L Q^T`.
fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn min_max_eig(m: &DMatrix<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(m.clone()).eigenvalues;
    (e.min(), e.max())
}

/// Linear part `A` of the transport map.
pub fn ot_matrix(src: &GaussianMoments, dst: &GaussianMoments) -> Result<DMatrix<f64>> {
    let su = src.check()?;
    let sv = dst.check()?;
    if su.nrows() != sv.nrows() {
        return Err(Error::ShapeMismatch("source and target dimensions differ".into()));
    }
    let (lo, hi) = min_max_eig(&su);
    if !(lo > 1e-12 * hi.max(1.0)) {
        return Err(Error::SingularCovariance);
    }
    let (vlo, vhi) = min_max_eig(&sv);
    if vlo < -1e-10 * vhi.max(1.0) {
        return Err(Error::InvalidInput("target covariance is not positive semi-definite".into()));
    }
    let su_half = spectral_map(&su, f64::sqrt);
    let su_inv_half = spectral_map(&su, |v| 1.0 / v.sqrt());
    let inner = &su_half * &sv * &su_half;
    let inner = (&inner + inner.transpose()) * 0.5;
    let middle = spectral_map(&inner, |v| v.max(0.0).sqrt());
    Ok(&su_inv_half * middle * &su_inv_half)
}

pub fn ot_map_gaussian(src: &GaussianMoments, dst: &GaussianMoments, u: &[f64]) -> Result<Vec<f64>> {
    let n = src.mean.len();
    if u.len() != n || dst.mean.len() != n {
        return Err(Error::ShapeMismatch(format!("vector of length {} for {n}-d moments", u.len())));
    }
    let a = ot_matrix(src, dst)?;
    let centered = DVector::from_iterator(n, u.iter().zip(src.mean.iter()).map(|(x, m)| x - m));
    let mapped = a * centered;
    Ok(mapped.iter().zip(dst.mean.iter()).map(|(v, m)| v + m).collect())
}
