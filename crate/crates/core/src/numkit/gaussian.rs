use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{RngStream, LN_2PI};
use crate::{Error, Result};

/// Multivariate normal stored as mean plus lower-triangular factor `L`,
/// with covariance `L Lᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDist {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl GaussianDist {
    /// `factor` must be square, lower triangular with a strictly positive diagonal.
    pub fn from_factor(mean: DVector<f64>, factor: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if factor.nrows() != p || factor.ncols() != p {
            return Err(Error::DimensionMismatch { expected: p, got: factor.nrows() });
        }
        for i in 0..p {
            if !(factor[(i, i)] > 0.0) {
                return Err(Error::NotPositiveDefinite("factor diagonal must be positive"));
            }
            for j in i + 1..p {
                if factor[(i, j)] != 0.0 {
                    return Err(Error::InvalidArgument("factor must be lower triangular".into()));
                }
            }
        }
        Ok(Self { mean, factor })
    }

    pub fn from_covariance(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), got: cov.nrows() });
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        let chol = Cholesky::new(sym).ok_or(Error::NotPositiveDefinite("covariance"))?;
        Ok(Self { mean, factor: chol.l() })
    }

    /// Covariance `L Lᵀ + jitter·I` for an arbitrary (unconstrained) lower factor.
    pub fn from_raw_factor(mean: DVector<f64>, raw: &DMatrix<f64>, jitter: f64) -> Result<Self> {
        let p = mean.len();
        let cov = raw * raw.transpose() + DMatrix::identity(p, p) * jitter;
        Self::from_covariance(mean, cov)
    }

    pub fn isotropic(mean: DVector<f64>, std: f64) -> Result<Self> {
        let p = mean.len();
        Self::from_factor(mean, DMatrix::identity(p, p) * std)
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: DVector::zeros(dim), factor: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    pub fn precision(&self) -> DMatrix<f64> {
        let p = self.dim();
        let linv = self.factor.solve_lower_triangular(&DMatrix::identity(p, p)).expect("positive diagonal");
        linv.transpose() * linv
    }

    /// `log det Σ`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn log_pdf(&self, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: z.len() });
        }
        let r = z - &self.mean;
        let u = self.factor.solve_lower_triangular(&r).expect("positive diagonal");
        Ok(-0.5 * (self.dim() as f64 * LN_2PI + self.log_det() + u.norm_squared()))
    }

    pub fn sample(&self, rng: &mut RngStream) -> DVector<f64> {
        let eps = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample(StandardNormal)));
        &self.mean + &self.factor * eps
    }
}

pub fn mvn_logpdf(z: &DVector<f64>, d: &GaussianDist) -> Result<f64> {
    d.log_pdf(z)
}

pub fn mvn_sample(d: &GaussianDist, rng: &mut RngStream) -> DVector<f64> {
    d.sample(rng)
}
