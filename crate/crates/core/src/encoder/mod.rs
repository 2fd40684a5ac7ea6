//! Amortized conditional densities `q_φ(z | x)` and their optimizer.

mod adam;
mod full_cov;
mod mixture;
mod mlp;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use adam::{AdamState, OptimizerMode};
pub use full_cov::FullCovGaussianEncoder;
pub use mixture::{MixtureDiagGaussianEncoder, MixtureParams};
pub use mlp::{ForwardCache, MlpParams};

use crate::numkit::{GaussianDist, RngStream};
use crate::{Error, Result};

pub const DEFAULT_JITTER: f64 = 1e-4;
pub const DEFAULT_COMPONENTS: usize = 8;
const CHECKPOINT_VERSION: u32 = 1;

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

fn default_components() -> usize {
    DEFAULT_COMPONENTS
}

/// Encoder family and trunk shape, as read from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EncoderSpec {
    FullCov {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_jitter")]
        jitter: f64,
    },
    Mixture {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_components")]
        components: usize,
    },
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::FullCov { hidden: default_hidden(), jitter: DEFAULT_JITTER }
    }
}

impl EncoderSpec {
    pub fn build(&self, obs_dim: usize, latent_dim: usize, rng: &mut RngStream) -> Result<Encoder> {
        Ok(match self {
            EncoderSpec::FullCov { hidden, jitter } => {
                Encoder::FullCov(FullCovGaussianEncoder::new(obs_dim, hidden, latent_dim, *jitter, rng)?)
            }
            EncoderSpec::Mixture { hidden, components } => {
                if *components == 0 {
                    return Err(Error::InvalidArgument("mixture needs at least one component".into()));
                }
                Encoder::Mixture(MixtureDiagGaussianEncoder::new(obs_dim, hidden, latent_dim, *components, rng)?)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    FullCov(FullCovGaussianEncoder),
    Mixture(MixtureDiagGaussianEncoder),
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    family: String,
    sizes: Vec<usize>,
    latent_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    jitter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    components: Option<usize>,
    param_count: usize,
}

impl Encoder {
    pub fn family(&self) -> &'static str {
        match self {
            Encoder::FullCov(_) => "full-cov",
            Encoder::Mixture(_) => "mixture",
        }
    }

    fn trunk(&self) -> &MlpParams {
        match self {
            Encoder::FullCov(e) => &e.trunk,
            Encoder::Mixture(e) => &e.trunk,
        }
    }

    fn trunk_mut(&mut self) -> &mut MlpParams {
        match self {
            Encoder::FullCov(e) => &mut e.trunk,
            Encoder::Mixture(e) => &mut e.trunk,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Encoder::FullCov(e) => e.latent_dim,
            Encoder::Mixture(e) => e.latent_dim,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk().input_dim()
    }

    pub fn num_params(&self) -> usize {
        self.trunk().params().len()
    }

    pub fn params(&self) -> &[f64] {
        self.trunk().params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.trunk_mut().params_mut()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        self.trunk_mut().set_params(flat)
    }

    pub fn log_prob(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        match self {
            Encoder::FullCov(e) => e.log_prob(x, z),
            Encoder::Mixture(e) => e.log_prob(x, z),
        }
    }

    /// `log q(z_i | x)` for a batch, sharing one forward pass.
    pub fn log_probs(&self, x: &DVector<f64>, zs: &[DVector<f64>]) -> Vec<f64> {
        match self {
            Encoder::FullCov(e) => {
                let d = e.gaussian(x);
                zs.iter().map(|z| d.log_pdf(z).expect("latent dimension")).collect()
            }
            Encoder::Mixture(e) => {
                let m = e.mixture(x);
                zs.iter().map(|z| m.log_prob(z)).collect()
            }
        }
    }

    /// Draws carry no gradient information.
    pub fn sample(&self, x: &DVector<f64>, n: usize, rng: &mut RngStream) -> Vec<DVector<f64>> {
        match self {
            Encoder::FullCov(e) => e.sample(x, n, rng),
            Encoder::Mixture(e) => e.sample(x, n, rng),
        }
    }

    /// `Σ_i c_i ∇_φ log q_φ(z_i | x)`; the coefficients are constants.
    pub fn score_grad(&self, x: &DVector<f64>, zs: &[DVector<f64>], coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(zs.len(), coeffs.len(), "one coefficient per latent");
        match self {
            Encoder::FullCov(e) => e.score_grad(x, zs, coeffs),
            Encoder::Mixture(e) => e.score_grad(x, zs, coeffs),
        }
    }

    /// The conditional as a Gaussian, for families where that is exact.
    pub fn gaussian(&self, x: &DVector<f64>) -> Option<GaussianDist> {
        match self {
            Encoder::FullCov(e) => Some(e.gaussian(x)),
            Encoder::Mixture(_) => None,
        }
    }

    pub fn mean(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Encoder::FullCov(e) => e.gaussian(x).mean().clone(),
            Encoder::Mixture(e) => e.mixture(x).mean(),
        }
    }

    /// Writes `<stem>.bin` (little-endian f64 parameters) and `<stem>.json`.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let stem = stem.as_ref();
        let bin = stem.with_extension("bin");
        let json = stem.with_extension("json");
        let bytes: Vec<u8> = self.params().iter().flat_map(|p| p.to_le_bytes()).collect();
        fs::write(&bin, bytes)?;
        let (jitter, components) = match self {
            Encoder::FullCov(e) => (Some(e.jitter), None),
            Encoder::Mixture(e) => (None, Some(e.components)),
        };
        let sidecar = Sidecar {
            version: CHECKPOINT_VERSION,
            family: self.family().to_string(),
            sizes: self.trunk().sizes().to_vec(),
            latent_dim: self.latent_dim(),
            jitter,
            components,
            param_count: self.num_params(),
        };
        fs::write(&json, serde_json::to_string_pretty(&sidecar)?)?;
        Ok((bin, json))
    }

    pub fn load(stem: impl AsRef<Path>) -> Result<Self> {
        let stem = stem.as_ref();
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
        if sidecar.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", sidecar.version)));
        }
        let bytes = fs::read(stem.with_extension("bin"))?;
        if bytes.len() != 8 * sidecar.param_count {
            return Err(Error::Format(format!(
                "expected {} parameters, file holds {} bytes",
                sidecar.param_count,
                bytes.len()
            )));
        }
        let params = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let trunk = MlpParams::from_flat(sidecar.sizes, params)?;
        match sidecar.family.as_str() {
            "full-cov" => Ok(Encoder::FullCov(FullCovGaussianEncoder::from_trunk(
                trunk,
                sidecar.latent_dim,
                sidecar.jitter.unwrap_or(DEFAULT_JITTER),
            )?)),
            "mixture" => Ok(Encoder::Mixture(MixtureDiagGaussianEncoder::from_trunk(
                trunk,
                sidecar.latent_dim,
                sidecar.components.ok_or_else(|| Error::Format("mixture sidecar lacks components".into()))?,
            )?)),
            other => Err(Error::Format(format!("unknown encoder family `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ConjugateGaussian1D, GenerativeModel};
    use crate::numkit::{log_mean_exp, LN_2PI};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut RngStream, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
    }

    fn perturb(enc: &mut Encoder, rng: &mut RngStream, scale: f64) {
        for p in enc.params_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *p += scale * e;
        }
    }

    fn weighted_log_q(enc: &Encoder, x: &DVector<f64>, zs: &[DVector<f64>], c: &[f64]) -> f64 {
        zs.iter().zip(c).map(|(z, c)| c * enc.log_prob(x, z)).sum()
    }

    #[allow(clippy::needless_range_loop)]
    fn fd_check(spec: &EncoderSpec, obs: usize, latent: usize, seed: u64) {
        let mut rng = RngStream::new(seed, 0);
        for trial in 0..64 {
            let mut enc = spec.build(obs, latent, &mut rng).unwrap();
            perturb(&mut enc, &mut rng, 0.3);
            let x = randn(&mut rng, obs);
            let zs: Vec<_> = (0..3).map(|_| randn(&mut rng, latent)).collect();
            let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let an = enc.score_grad(&x, &zs, &c);
            let h = 1e-5;
            for i in 0..enc.num_params() {
                let orig = enc.params()[i];
                enc.params_mut()[i] = orig + h;
                let up = weighted_log_q(&enc, &x, &zs, &c);
                enc.params_mut()[i] = orig - h;
                let dn = weighted_log_q(&enc, &x, &zs, &c);
                enc.params_mut()[i] = orig;
                let fd = (up - dn) / (2.0 * h);
                let rel = (fd - an[i]).abs() / an[i].abs().max(1.0);
                assert!(rel < 1e-4, "trial {trial} param {i}: analytic {} vs fd {fd}", an[i]);
            }
        }
    }

    #[test]
    fn full_cov_score_matches_finite_differences() {
        fd_check(&EncoderSpec::FullCov { hidden: vec![6, 5], jitter: DEFAULT_JITTER }, 3, 3, 11);
    }

    #[test]
    fn mixture_score_matches_finite_differences() {
        fd_check(&EncoderSpec::Mixture { hidden: vec![6, 5], components: 3 }, 2, 2, 12);
    }

    #[test]
    fn zero_coefficients_give_zero_gradient() {
        let mut rng = RngStream::new(1, 0);
        let enc = EncoderSpec::default().build(2, 2, &mut rng).unwrap();
        let zs = vec![randn(&mut rng, 2); 4];
        let g = enc.score_grad(&randn(&mut rng, 2), &zs, &[0.0; 4]);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    fn forced_full_cov(mu: f64, l: f64, jitter: f64) -> Encoder {
        // linear trunk, zero weights, bias = (μ, L)
        let trunk = MlpParams::from_flat(vec![1, 2], vec![0.0, 0.0, mu, l]).unwrap();
        Encoder::FullCov(FullCovGaussianEncoder::from_trunk(trunk, 1, jitter).unwrap())
    }

    #[test]
    fn full_cov_standard_normal_at_origin() {
        let enc = forced_full_cov(0.0, 1.0, 0.0);
        let v = enc.log_prob(&DVector::from_element(1, 0.7), &DVector::zeros(1));
        assert!((v + 0.5 * LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn full_cov_mean_score_is_gaussian_identity() {
        let (mu, sigma) = (0.4, 1.7);
        let enc = forced_full_cov(mu, sigma, 0.0);
        let x = DVector::from_element(1, 0.0);
        let z = DVector::from_element(1, -1.3);
        let g = enc.score_grad(&x, std::slice::from_ref(&z), &[1.0]);
        // params: [w_mu, w_L, b_mu, b_L]; x = 0 so only biases receive gradient
        assert!((g[2] - (z[0] - mu) / (sigma * sigma)).abs() < 1e-12);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn tiny_covariance_samples_sit_at_mean() {
        let enc = forced_full_cov(2.5, 1e-9, 1e-20);
        let mut rng = RngStream::new(3, 0);
        for z in enc.sample(&DVector::zeros(1), 100, &mut rng) {
            assert!((z[0] - 2.5).abs() < 1e-6);
        }
    }

    fn forced_mixture(logits: &[f64], means: &[f64], log_stds: &[f64], latent: usize) -> Encoder {
        let c = logits.len();
        let mut bias = logits.to_vec();
        bias.extend_from_slice(means);
        bias.extend_from_slice(log_stds);
        let out = bias.len();
        let mut flat = vec![0.0; out];
        flat.extend(bias);
        let trunk = MlpParams::from_flat(vec![1, out], flat).unwrap();
        Encoder::Mixture(MixtureDiagGaussianEncoder::from_trunk(trunk, latent, c).unwrap())
    }

    #[test]
    fn single_component_mixture_is_diagonal_gaussian() {
        let enc = forced_mixture(&[0.3], &[1.0, -2.0], &[0.2, -0.5], 2);
        let z = DVector::from_vec(vec![0.4, -1.1]);
        let mut expected = 0.0;
        for (zi, (m, ls)) in z.iter().zip([(1.0, 0.2f64), (-2.0, -0.5f64)]) {
            let s = ls.exp();
            expected += -0.5 * LN_2PI - s.ln() - 0.5 * ((zi - m) / s).powi(2);
        }
        let got = enc.log_prob(&DVector::zeros(1), &z);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn mixture_matches_direct_component_sum() {
        let mut rng = RngStream::new(8, 0);
        let c = 4;
        let logits: Vec<f64> = (0..c).map(|_| rng.random_range(-2.0..2.0)).collect();
        let means: Vec<f64> = (0..2 * c).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lstd: Vec<f64> = (0..2 * c).map(|_| rng.random_range(-1.0..0.5)).collect();
        let enc = forced_mixture(&logits, &means, &lstd, 2);
        let z = DVector::from_vec(vec![0.3, -0.8]);
        let zsum: f64 = logits.iter().map(|l| l.exp()).sum();
        let mut dens = 0.0;
        for k in 0..c {
            let mut comp = logits[k].exp() / zsum;
            for d in 0..2 {
                let s = lstd[k * 2 + d].exp();
                let u = (z[d] - means[k * 2 + d]) / s;
                comp *= (-0.5 * u * u).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
            }
            dens += comp;
        }
        let got = enc.log_prob(&DVector::zeros(1), &z);
        assert!((got - dens.ln()).abs() < 1e-12);
    }

    #[test]
    fn dominant_logit_selects_component() {
        let enc = forced_mixture(&[30.0, 0.0], &[5.0, -5.0], &[-3.0, -3.0], 1);
        let mut rng = RngStream::new(4, 0);
        for z in enc.sample(&DVector::zeros(1), 1000, &mut rng) {
            assert!((z[0] - 5.0).abs() < 1.0);
        }
    }

    #[test]
    fn mixture_sample_mean_clt() {
        let enc = forced_mixture(&[0.0, 1.0], &[-1.0, 2.0], &[0.0, -0.7], 1);
        let x = DVector::zeros(1);
        let mut rng = RngStream::new(5, 0);
        let n = 100_000;
        let zs = enc.sample(&x, n, &mut rng);
        let mean = zs.iter().map(|z| z[0]).sum::<f64>() / n as f64;
        let var = zs.iter().map(|z| (z[0] - mean).powi(2)).sum::<f64>() / n as f64;
        let analytic = enc.mean(&x)[0];
        assert!((mean - analytic).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn mixture_density_normalizes_2d() {
        let mut rng = RngStream::new(6, 0);
        let enc = EncoderSpec::Mixture { hidden: vec![8], components: 8 }.build(2, 2, &mut rng).unwrap();
        let x = DVector::from_vec(vec![0.2, -0.1]);
        let (lo, hi, n) = (-8.0, 8.0, 800);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let z = DVector::from_vec(vec![lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h]);
                total += enc.log_prob(&x, &z).exp();
            }
        }
        assert!((total * h * h - 1.0).abs() < 1e-3, "{}", total * h * h);
    }

    #[test]
    fn mixture_density_normalizes_1d() {
        let mut rng = RngStream::new(7, 0);
        let enc = EncoderSpec::Mixture { hidden: vec![8], components: 8 }.build(1, 1, &mut rng).unwrap();
        let x = DVector::from_element(1, 0.5);
        let (lo, hi, n) = (-10.0, 10.0, 20_000);
        let h = (hi - lo) / n as f64;
        let total: f64 =
            (0..n).map(|i| enc.log_prob(&x, &DVector::from_element(1, lo + (i as f64 + 0.5) * h)).exp()).sum();
        assert!((total * h - 1.0).abs() < 1e-3);
    }

    #[test]
    fn importance_weighting_recovers_evidence() {
        let model = ConjugateGaussian1D::default();
        let x = DVector::from_element(1, 3.0);
        // broader than the posterior N(2.970, 0.990)
        let enc = forced_full_cov(2.9, 1.6, 0.0);
        let mut rng = RngStream::new(9, 0);
        let n = 10_000;
        let lw: Vec<f64> =
            enc.sample(&x, n, &mut rng).iter().map(|z| model.log_joint(&x, z) - enc.log_prob(&x, z)).collect();
        let est = log_mean_exp(&lw).unwrap();
        let w: Vec<f64> = lw.iter().map(|l| (l - est).exp()).collect();
        let var = w.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_log = (var / n as f64).sqrt();
        let truth = model.analytic_log_evidence(&x).unwrap();
        assert!((est - truth).abs() < 3.0 * se_log, "{est} vs {truth} (se {se_log})");
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = RngStream::new(10, 0);
        for spec in [EncoderSpec::default(), EncoderSpec::Mixture { hidden: vec![4], components: 3 }] {
            let enc = spec.build(3, 2, &mut rng).unwrap();
            let stem = dir.path().join(enc.family());
            enc.save(&stem).unwrap();
            assert_eq!(Encoder::load(&stem).unwrap(), enc);
        }
    }

    #[test]
    fn initial_full_cov_is_unit_gaussian_offset() {
        let mut rng = RngStream::new(2, 0);
        let enc = EncoderSpec::FullCov { hidden: vec![], jitter: 0.0 }.build(1, 2, &mut rng).unwrap();
        let Encoder::FullCov(fc) = &enc else { unreachable!() };
        let d = fc.gaussian(&DVector::zeros(1));
        assert!((d.covariance() - nalgebra::DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }
}
