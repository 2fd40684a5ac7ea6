use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::MlpParams;
use crate::numkit::{log_sum_exp, RngStream, LN_2PI};
use crate::Result;

/// Mixture of `C` diagonal Gaussians whose logits, means and log-stds are
/// produced by the trunk, laid out as `[logits (C) | means (C·p) | log-stds (C·p)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureDiagGaussianEncoder {
    pub trunk: MlpParams,
    pub latent_dim: usize,
    pub components: usize,
}

/// Mixture parameters at one `x`.
#[derive(Clone, Debug)]
pub struct MixtureParams {
    pub log_weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub log_stds: Vec<DVector<f64>>,
}

impl MixtureParams {
    /// Per-component log densities `log π_c + log N(z; m_c, diag s_c²)`.
    fn component_logs(&self, z: &DVector<f64>) -> Vec<f64> {
        (0..self.log_weights.len())
            .map(|c| {
                let mut s = self.log_weights[c];
                for d in 0..z.len() {
                    let ls = self.log_stds[c][d];
                    let u = (z[d] - self.means[c][d]) * (-ls).exp();
                    s += -0.5 * (LN_2PI + u * u) - ls;
                }
                s
            })
            .collect()
    }

    pub fn log_prob(&self, z: &DVector<f64>) -> f64 {
        log_sum_exp(&self.component_logs(z)).unwrap_or(f64::NEG_INFINITY)
    }

    pub fn sample(&self, rng: &mut RngStream) -> DVector<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = self.log_weights.len() - 1;
        for (c, lw) in self.log_weights.iter().enumerate() {
            acc += lw.exp();
            if u < acc {
                comp = c;
                break;
            }
        }
        let p = self.means[comp].len();
        DVector::from_fn(p, |d, _| {
            let e: f64 = StandardNormal.sample(rng);
            self.means[comp][d] + self.log_stds[comp][d].exp() * e
        })
    }

    /// Mixture mean `Σ π_c m_c`.
    pub fn mean(&self) -> DVector<f64> {
        self.log_weights
            .iter()
            .zip(&self.means)
            .fold(DVector::zeros(self.means[0].len()), |acc, (lw, m)| acc + m * lw.exp())
    }
}

impl MixtureDiagGaussianEncoder {
    pub fn head_dim(latent_dim: usize, components: usize) -> usize {
        components * (1 + 2 * latent_dim)
    }

    /// Random trunk; component mean biases spread uniformly in `(-1, 1)`,
    /// log-std biases and logits start at zero.
    pub fn new(
        obs_dim: usize,
        hidden: &[usize],
        latent_dim: usize,
        components: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(Self::head_dim(latent_dim, components));
        let mut trunk = MlpParams::init(sizes, rng)?;
        let spread: Vec<f64> = (0..components * latent_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = trunk.output_bias_mut();
        bias.iter_mut().for_each(|b| *b = 0.0);
        bias[components..components + components * latent_dim].copy_from_slice(&spread);
        Ok(Self { trunk, latent_dim, components })
    }

    pub fn from_trunk(trunk: MlpParams, latent_dim: usize, components: usize) -> Result<Self> {
        if trunk.output_dim() != Self::head_dim(latent_dim, components) {
            return Err(crate::Error::DimensionMismatch {
                expected: Self::head_dim(latent_dim, components),
                got: trunk.output_dim(),
            });
        }
        Ok(Self { trunk, latent_dim, components })
    }

    fn params_from_output(&self, out: &[f64]) -> MixtureParams {
        let (c, p) = (self.components, self.latent_dim);
        let logits = &out[..c];
        let lse = log_sum_exp(logits).expect("finite logits");
        let log_weights = logits.iter().map(|l| l - lse).collect();
        let means = (0..c).map(|k| DVector::from_column_slice(&out[c + k * p..c + (k + 1) * p])).collect();
        let off = c + c * p;
        let log_stds = (0..c).map(|k| DVector::from_column_slice(&out[off + k * p..off + (k + 1) * p])).collect();
        MixtureParams { log_weights, means, log_stds }
    }

    pub fn mixture(&self, x: &DVector<f64>) -> MixtureParams {
        self.params_from_output(self.trunk.forward(x.as_slice()).output())
    }

    pub fn log_prob(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        self.mixture(x).log_prob(z)
    }

    pub fn sample(&self, x: &DVector<f64>, n: usize, rng: &mut RngStream) -> Vec<DVector<f64>> {
        let m = self.mixture(x);
        (0..n).map(|_| m.sample(rng)).collect()
    }

    pub fn score_grad(&self, x: &DVector<f64>, zs: &[DVector<f64>], coeffs: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.trunk.params().len()];
        if coeffs.iter().all(|c| *c == 0.0) {
            return grad;
        }
        let cache = self.trunk.forward(x.as_slice());
        let mix = self.params_from_output(cache.output());
        let (cn, p) = (self.components, self.latent_dim);
        let mut out_grad = vec![0.0; Self::head_dim(p, cn)];
        let pis: Vec<f64> = mix.log_weights.iter().map(|l| l.exp()).collect();
        let std_off = cn + cn * p;
        for (z, &coef) in zs.iter().zip(coeffs) {
            if coef == 0.0 {
                continue;
            }
            let logs = mix.component_logs(z);
            let Ok(total) = log_sum_exp(&logs) else { continue };
            for k in 0..cn {
                let resp = (logs[k] - total).exp();
                out_grad[k] += coef * (resp - pis[k]);
                if resp == 0.0 {
                    continue;
                }
                for d in 0..p {
                    let inv_var = (-2.0 * mix.log_stds[k][d]).exp();
                    let r = z[d] - mix.means[k][d];
                    out_grad[cn + k * p + d] += coef * resp * r * inv_var;
                    out_grad[std_off + k * p + d] += coef * resp * (r * r * inv_var - 1.0);
                }
            }
        }
        self.trunk.backward(&cache, &out_grad, &mut grad);
        grad
    }
}
