use nalgebra::{DMatrix, DVector};

use super::MlpParams;
use crate::numkit::{GaussianDist, RngStream};
use crate::Result;

/// `q(z | x) = N(μ(x), L(x) L(x)ᵀ + ε I)`.
///
/// The trunk outputs `μ` followed by the lower triangle of `L`, row by row.
/// `L` is unconstrained; the jitter keeps the covariance positive definite.
#[derive(Clone, Debug, PartialEq)]
pub struct FullCovGaussianEncoder {
    pub trunk: MlpParams,
    pub latent_dim: usize,
    pub jitter: f64,
}

/// Per-`x` quantities shared across a batch of `z`.
struct Head {
    mean: DVector<f64>,
    raw: DMatrix<f64>,
    dist: GaussianDist,
}

pub(crate) fn tril_len(p: usize) -> usize {
    p * (p + 1) / 2
}

impl FullCovGaussianEncoder {
    pub fn head_dim(latent_dim: usize) -> usize {
        latent_dim + tril_len(latent_dim)
    }

    /// Random trunk whose output bias starts at `μ = 0`, `L = I`.
    pub fn new(obs_dim: usize, hidden: &[usize], latent_dim: usize, jitter: f64, rng: &mut RngStream) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(Self::head_dim(latent_dim));
        let mut trunk = MlpParams::init(sizes, rng)?;
        let bias = trunk.output_bias_mut();
        bias.iter_mut().for_each(|b| *b = 0.0);
        for i in 0..latent_dim {
            bias[latent_dim + i * (i + 1) / 2 + i] = 1.0;
        }
        Ok(Self { trunk, latent_dim, jitter })
    }

    pub fn from_trunk(trunk: MlpParams, latent_dim: usize, jitter: f64) -> Result<Self> {
        if trunk.output_dim() != Self::head_dim(latent_dim) {
            return Err(crate::Error::DimensionMismatch {
                expected: Self::head_dim(latent_dim),
                got: trunk.output_dim(),
            });
        }
        Ok(Self { trunk, latent_dim, jitter })
    }

    fn head_from_output(&self, out: &[f64]) -> Head {
        let p = self.latent_dim;
        let mean = DVector::from_column_slice(&out[..p]);
        let mut raw = DMatrix::zeros(p, p);
        let mut k = p;
        for i in 0..p {
            for j in 0..=i {
                raw[(i, j)] = out[k];
                k += 1;
            }
        }
        let dist = GaussianDist::from_raw_factor(mean.clone(), &raw, self.jitter)
            .or_else(|_| GaussianDist::from_raw_factor(mean.clone(), &raw, self.jitter.max(1e-12)))
            .expect("jittered covariance is positive definite");
        Head { mean, raw, dist }
    }

    pub fn gaussian(&self, x: &DVector<f64>) -> GaussianDist {
        let cache = self.trunk.forward(x.as_slice());
        self.head_from_output(cache.output()).dist
    }

    pub fn log_prob(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        self.gaussian(x).log_pdf(z).expect("latent dimension")
    }

    pub fn sample(&self, x: &DVector<f64>, n: usize, rng: &mut RngStream) -> Vec<DVector<f64>> {
        let d = self.gaussian(x);
        (0..n).map(|_| d.sample(rng)).collect()
    }

    /// `Σ_i c_i ∇_φ log q(z_i | x)` with one forward and one backward pass.
    pub fn score_grad(&self, x: &DVector<f64>, zs: &[DVector<f64>], coeffs: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.trunk.params().len()];
        if coeffs.iter().all(|c| *c == 0.0) {
            return grad;
        }
        let cache = self.trunk.forward(x.as_slice());
        let head = self.head_from_output(cache.output());
        let out_grad = self.head_grad(&head, zs, coeffs);
        self.trunk.backward(&cache, &out_grad, &mut grad);
        grad
    }

    /// Gradient in head space. With `Σ = L Lᵀ + εI` and `r = z − μ`:
    /// `∂/∂μ = Σ⁻¹ r`, `∂/∂L = (Σ⁻¹ r rᵀ Σ⁻¹ − Σ⁻¹) L`.
    fn head_grad(&self, head: &Head, zs: &[DVector<f64>], coeffs: &[f64]) -> Vec<f64> {
        let p = self.latent_dim;
        let prec = head.dist.precision();
        let mut sum_r = DVector::zeros(p);
        let mut scatter = DMatrix::zeros(p, p);
        let mut total = 0.0;
        for (z, &c) in zs.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            let r = z - &head.mean;
            sum_r += &r * c;
            scatter.ger(c, &r, &r, 1.0);
            total += c;
        }
        let g_mean = &prec * sum_r;
        let a = &prec * scatter * &prec - &prec * total;
        let g_raw = a * &head.raw;
        let mut out = Vec::with_capacity(Self::head_dim(p));
        out.extend(g_mean.iter());
        for i in 0..p {
            for j in 0..=i {
                out.push(g_raw[(i, j)]);
            }
        }
        out
    }
}
