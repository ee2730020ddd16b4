use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean and covariance of a set of feature rows.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianFit {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::shape("GaussianFit", &[d], &[covariance.nrows(), covariance.ncols()]));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-9 {
            return Err(Error::Invalid(format!("covariance is not symmetric (max deviation {asym:e})")));
        }
        Ok(GaussianFit { mean, covariance })
    }

    /// Sample mean and unbiased covariance of the rows, accumulated in row
    /// order.
    pub fn fit<T: Scalar>(features: &Tensor<T>) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() < 2 {
            return Err(Error::Invalid(format!("need at least 2 feature rows, got shape {:?}", features.shape())));
        }
        let (m, d) = (features.rows(), features.cols());
        let x = DMatrix::from_row_iterator(m, d, features.data().iter().map(|v| v.to_f64_lossy()));
        let mean = x.row_mean().transpose();
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let mut covariance = centered.transpose() * &centered / (m - 1) as f64;
        covariance = (&covariance + covariance.transpose()) * 0.5;
        Ok(GaussianFit { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Smallest covariance eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.covariance.clone()).eigenvalues.min()
    }

    /// Adds `eps * I` to the covariance.
    pub fn regularized(&self, eps: f64) -> Self {
        let d = self.dim();
        GaussianFit {
            mean: self.mean.clone(),
            covariance: &self.covariance + DMatrix::identity(d, d) * eps,
        }
    }
}

/// Square root of a symmetric matrix with negative eigenvalues clamped to 0.
fn sqrtm_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})`.
///
/// The trace of `(S_a S_b)^{1/2}` is taken as that of the symmetric
/// `(R S_b R)^{1/2}` with `R = S_a^{1/2}`, which has the same eigenvalues.
pub fn frechet_distance(a: &GaussianFit, b: &GaussianFit) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape("frechet_distance", &[a.dim()], &[b.dim()]));
    }
    let dm = (&a.mean - &b.mean).norm_squared();
    let r = sqrtm_psd(&a.covariance);
    let inner = &r * &b.covariance * &r;
    let cross = sqrtm_psd(&inner).trace();
    let value = dm + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}
