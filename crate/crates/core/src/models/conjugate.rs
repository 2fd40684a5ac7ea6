use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};

use super::GenerativeModel;
use crate::numkit::{GaussianDist, RngStream, LN_2PI};
use crate::Result;

/// `z ~ N(0, prior_std²)`, `x | z ~ N(z, noise_std²)`.
#[derive(Clone, Debug)]
pub struct ConjugateGaussian1D {
    pub prior_std: f64,
    pub noise_std: f64,
}

impl Default for ConjugateGaussian1D {
    fn default() -> Self {
        Self { prior_std: 10.0, noise_std: 1.0 }
    }
}

fn normal_logpdf(v: f64, mean: f64, std: f64) -> f64 {
    let r = (v - mean) / std;
    -0.5 * (LN_2PI + r * r) - std.ln()
}

impl ConjugateGaussian1D {
    pub fn posterior_mean_var(&self, x: f64) -> (f64, f64) {
        let var = 1.0 / (self.prior_std.powi(-2) + self.noise_std.powi(-2));
        (var * x / self.noise_std.powi(2), var)
    }
}

impl GenerativeModel for ConjugateGaussian1D {
    fn name(&self) -> &'static str {
        "conjugate-gaussian"
    }

    fn latent_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn sample_prior(&self, rng: &mut RngStream) -> DVector<f64> {
        DVector::from_element(1, Normal::new(0.0, self.prior_std).unwrap().sample(rng))
    }

    fn prior_logpdf(&self, z: &DVector<f64>) -> f64 {
        normal_logpdf(z[0], 0.0, self.prior_std)
    }

    fn log_lik(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        normal_logpdf(x[0], z[0], self.noise_std)
    }

    fn simulate(&self, z: &DVector<f64>, rng: &mut RngStream) -> DVector<f64> {
        DVector::from_element(1, Normal::new(z[0], self.noise_std).unwrap().sample(rng))
    }

    fn analytic_posterior(&self, x: &DVector<f64>) -> Result<GaussianDist> {
        let (m, v) = self.posterior_mean_var(x[0]);
        GaussianDist::from_factor(DVector::from_element(1, m), DMatrix::from_element(1, 1, v.sqrt()))
    }

    fn analytic_log_evidence(&self, x: &DVector<f64>) -> Result<f64> {
        let s = (self.prior_std.powi(2) + self.noise_std.powi(2)).sqrt();
        Ok(normal_logpdf(x[0], 0.0, s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::quadrature::adaptive_simpson;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn prior_and_likelihood_values() {
        let m = ConjugateGaussian1D::default();
        let lp = m.prior_logpdf(&v(0.0));
        assert!((lp + 0.5 * (200.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
        assert!((m.log_lik(&v(1.3), &v(1.3)) + 0.5 * LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn posterior_is_100_over_101() {
        let m = ConjugateGaussian1D::default();
        let post = m.analytic_posterior(&v(2.0)).unwrap();
        assert!((post.mean()[0] - 200.0 / 101.0).abs() < 1e-14);
        assert!((post.covariance()[(0, 0)] - 100.0 / 101.0).abs() < 1e-14);
    }

    #[test]
    fn evidence_at_zero_and_by_quadrature() {
        let m = ConjugateGaussian1D::default();
        let e0 = m.analytic_log_evidence(&v(0.0)).unwrap();
        assert!((e0 + 0.5 * (2.0 * std::f64::consts::PI * 101.0).ln()).abs() < 1e-14);
        for x in [-7.3, 0.4, 12.0] {
            let joint = |z: f64| m.log_joint(&v(x), &v(z)).exp();
            let q = adaptive_simpson(&joint, x - 40.0, x + 40.0, 1e-14);
            let exact = m.analytic_log_evidence(&v(x)).unwrap().exp();
            assert!((q - exact).abs() < 1e-8 * exact.max(1e-3), "{q} {exact}");
        }
    }

    #[test]
    fn likelihood_integrates_to_one() {
        let m = ConjugateGaussian1D::default();
        for z in [-3.0, 0.0, 0.7, 5.5, -11.0] {
            let f = |x: f64| m.log_lik(&v(x), &v(z)).exp();
            let total = adaptive_simpson(&f, z - 15.0, z + 15.0, 1e-10);
            assert!((total - 1.0).abs() < 1e-3);
        }
    }
}
