use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Multivariate normal with a cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEmission {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianEmission {
    /// Fails with [`Error::CovarianceNotPd`] when the Cholesky factorization
    /// does not exist.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if covariance.nrows() != dim || covariance.ncols() != dim {
            return Err(Error::InvalidArgument(format!(
                "covariance is {}x{}, expected {dim}x{dim}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or(Error::CovarianceNotPd)?;
        let chol_lower = chol.l();
        let log_det: f64 = 2.0 * chol_lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::CovarianceNotPd);
        }
        let log_norm = -0.5 * (dim as f64 * (2.0 * PI).ln() + log_det);
        Ok(GaussianEmission {
            mean,
            covariance,
            chol_lower,
            log_norm,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `log N(x; mean, covariance)`. `x` must have the emission's dimension.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        // forward substitution L z = x - mean
        let dim = self.dim();
        let l = &self.chol_lower;
        let mut z = [0.0f64; 8];
        let mut heap;
        let z: &mut [f64] = if dim <= z.len() {
            &mut z[..dim]
        } else {
            heap = vec![0.0; dim];
            &mut heap
        };
        let mut maha = 0.0;
        for i in 0..dim {
            let mut acc = x[i] - self.mean[i];
            for k in 0..i {
                acc -= l[(i, k)] * z[k];
            }
            z[i] = acc / l[(i, i)];
            maha += z[i] * z[i];
        }
        self.log_norm - 0.5 * maha
    }
}

/// `log N(x; mean, covariance) = -1/2 [D log 2pi + log det S + (x-m)' S^-1 (x-m)]`.
pub fn log_gaussian_density(x: &[f64], mean: &[f64], covariance: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mean.len() {
        return Err(Error::InvalidArgument(format!(
            "observation has dimension {}, mean has {}",
            x.len(),
            mean.len()
        )));
    }
    let emission = GaussianEmission::new(DVector::from_column_slice(mean), covariance.clone())?;
    Ok(emission.log_density(x))
}
