//! Generative models `p(z) p(x | z)`.
//!
//! The Gaussian models expose closed-form posteriors and evidences, which the
//! rest of the crate uses as verification oracles.

mod conjugate;
mod linear;
mod two_moons;

pub use conjugate::ConjugateGaussian1D;
pub use linear::{DesignSpec, GaussianLinearModel};
pub use two_moons::TwoMoonsModel;

use nalgebra::DVector;

use crate::numkit::{std_normal, GaussianDist, RngStream, LN_2PI};
use crate::{Error, Result};

pub trait GenerativeModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn latent_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;

    fn sample_prior(&self, rng: &mut RngStream) -> DVector<f64>;
    /// `-inf` outside the prior support.
    fn prior_logpdf(&self, z: &DVector<f64>) -> f64;
    /// `log p(x | z)`; `-inf` for impossible observations, never NaN.
    fn log_lik(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64;
    /// Draws `x ~ p(x | z)`.
    fn simulate(&self, z: &DVector<f64>, rng: &mut RngStream) -> DVector<f64>;

    fn analytic_posterior(&self, _x: &DVector<f64>) -> Result<GaussianDist> {
        Err(Error::NoAnalyticEvidence(self.name()))
    }

    fn analytic_log_evidence(&self, _x: &DVector<f64>) -> Result<f64> {
        Err(Error::NoAnalyticEvidence(self.name()))
    }

    /// `log p(z, x)`, short-circuiting outside the prior support.
    fn log_joint(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let lp = self.prior_logpdf(z);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + self.log_lik(x, z)
    }
}

pub fn prior_sample(model: &dyn GenerativeModel, n: usize, rng: &mut RngStream) -> Vec<DVector<f64>> {
    (0..n).map(|_| model.sample_prior(rng)).collect()
}

/// Draws `n` pairs `(z_j, x_j)` from the joint.
pub fn simulate_dataset(
    model: &dyn GenerativeModel,
    n: usize,
    rng: &mut RngStream,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    (0..n)
        .map(|_| {
            let z = model.sample_prior(rng);
            let x = model.simulate(&z, rng);
            (z, x)
        })
        .unzip()
}

/// Standard-normal prior with a likelihood that ignores `z`: `p(x | z) = c`.
///
/// Tempering a constant leaves the prior untouched and the evidence equal to
/// `c`, which pins the evidence estimator exactly.
#[derive(Clone, Debug)]
pub struct ConstantLikelihood {
    pub dim: usize,
    pub log_c: f64,
}

impl ConstantLikelihood {
    pub fn new(dim: usize, log_c: f64) -> Self {
        Self { dim, log_c }
    }
}

impl GenerativeModel for ConstantLikelihood {
    fn name(&self) -> &'static str {
        "constant-likelihood"
    }

    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn sample_prior(&self, rng: &mut RngStream) -> DVector<f64> {
        DVector::from_iterator(self.dim, (0..self.dim).map(|_| std_normal(rng)))
    }

    fn prior_logpdf(&self, z: &DVector<f64>) -> f64 {
        -0.5 * (self.dim as f64 * LN_2PI + z.norm_squared())
    }

    fn log_lik(&self, _x: &DVector<f64>, _z: &DVector<f64>) -> f64 {
        self.log_c
    }

    fn simulate(&self, _z: &DVector<f64>, _rng: &mut RngStream) -> DVector<f64> {
        DVector::zeros(1)
    }

    fn analytic_posterior(&self, _x: &DVector<f64>) -> Result<GaussianDist> {
        Ok(GaussianDist::standard(self.dim))
    }

    fn analytic_log_evidence(&self, _x: &DVector<f64>) -> Result<f64> {
        Ok(self.log_c)
    }
}

#[cfg(test)]
pub(crate) mod quadrature {
    /// Adaptive Simpson on `[a, b]`; test-only oracle.
    pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        }
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = simpson(fa, flm, fm, a, m);
            let right = simpson(fm, frm, fb, m, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
    }
}
