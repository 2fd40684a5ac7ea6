//! Divergences between the encoder and the true posterior.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::encoder::Encoder;
use crate::models::GenerativeModel;
use crate::numkit::{GaussianDist, RngStream};
use crate::smc::{lt_smc_run, SmcConfig};
use crate::{Error, Result};

/// One line of a training metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub method: String,
    pub fwd_kl: f64,
    pub rev_kl: f64,
    pub sym_kl: f64,
    #[serde(rename = "mean_log_C")]
    pub mean_log_c: f64,
    pub mean_ess: f64,
    pub wall_ms: u64,
}

/// Closed-form `KL(d0 ‖ d1)`.
pub fn gaussian_kl(d0: &GaussianDist, d1: &GaussianDist) -> Result<f64> {
    let p = d0.dim();
    if d1.dim() != p {
        return Err(Error::DimensionMismatch { expected: p, got: d1.dim() });
    }
    let l1 = d1.factor();
    let m = l1.solve_lower_triangular(d0.factor()).ok_or(Error::NotPositiveDefinite("kl factor"))?;
    let u = l1.solve_lower_triangular(&(d1.mean() - d0.mean())).ok_or(Error::NotPositiveDefinite("kl factor"))?;
    let kl = 0.5 * (m.norm_squared() + u.norm_squared() - p as f64 + d1.log_det() - d0.log_det());
    Ok(kl.max(0.0))
}

/// Forward, reverse and symmetric KL per datapoint with dataset averages.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KlReport {
    pub step: usize,
    pub forward: Vec<f64>,
    pub reverse: Vec<f64>,
    pub symmetric: Vec<f64>,
    pub avg_forward: f64,
    pub avg_reverse: f64,
    pub avg_symmetric: f64,
    /// Set when the values are Monte Carlo estimates rather than closed forms.
    pub approximate: bool,
    /// Standard error of `avg_forward` for Monte Carlo reports.
    pub forward_se: Option<f64>,
}

fn mean_of(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl KlReport {
    fn closed_form(step: usize, forward: Vec<f64>, reverse: Vec<f64>) -> Self {
        let symmetric: Vec<f64> = forward.iter().zip(&reverse).map(|(f, r)| f + r).collect();
        Self {
            step,
            avg_forward: mean_of(&forward),
            avg_reverse: mean_of(&reverse),
            avg_symmetric: mean_of(&symmetric),
            forward,
            reverse,
            symmetric,
            approximate: false,
            forward_se: None,
        }
    }
}

/// Closed-form divergences between each analytic posterior and `q_φ(·|x_j)`.
pub fn amortized_kl_report(
    encoder: &Encoder,
    model: &dyn GenerativeModel,
    xs: &[DVector<f64>],
    step: usize,
) -> Result<KlReport> {
    if !matches!(encoder, Encoder::FullCov(_)) {
        return Err(Error::Unsupported(format!("closed-form KL needs a Gaussian encoder, got `{}`", encoder.family())));
    }
    let pairs = xs
        .par_iter()
        .map(|x| {
            let post = model.analytic_posterior(x)?;
            let q = encoder.gaussian(x).expect("gaussian family");
            Ok((gaussian_kl(&post, &q)?, gaussian_kl(&q, &post)?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (fwd, rev) = pairs.into_iter().unzip();
    Ok(KlReport::closed_form(step, fwd, rev))
}

/// Monte Carlo forward KL using a reference LT-SMC run per datapoint:
/// `Σ_k w_k [log p(z_k, x) − log Ĉ − log q(z_k|x)]`. Reverse KL is not
/// estimated and is reported as NaN.
pub fn mc_forward_kl_report(
    encoder: &Encoder,
    model: &dyn GenerativeModel,
    xs: &[DVector<f64>],
    reference: &SmcConfig,
    rng: &RngStream,
    step: usize,
) -> Result<KlReport> {
    let per = xs
        .par_iter()
        .enumerate()
        .map(|(j, x)| {
            let rec = lt_smc_run(model, x, reference, &rng.derive(j as u64))
                .map_err(|e| Error::DatapointCollapse { datapoint: j, source: Box::new(e) })?;
            let terms: Vec<f64> =
                rec.atoms.iter().map(|z| model.log_joint(x, z) - rec.log_c - encoder.log_prob(x, z)).collect();
            let m: f64 = rec.weights.iter().zip(&terms).filter(|(w, _)| **w > 0.0).map(|(w, t)| w * t).sum();
            let var: f64 =
                rec.weights.iter().zip(&terms).filter(|(w, _)| **w > 0.0).map(|(w, t)| w * (t - m).powi(2)).sum();
            Ok((m, var / rec.final_ess()))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let n = per.len() as f64;
    let forward: Vec<f64> = per.iter().map(|p| p.0).collect();
    let se = (per.iter().map(|p| p.1).sum::<f64>()).sqrt() / n;
    let nan = vec![f64::NAN; forward.len()];
    Ok(KlReport {
        step,
        avg_forward: mean_of(&forward),
        avg_reverse: f64::NAN,
        avg_symmetric: f64::NAN,
        forward,
        reverse: nan.clone(),
        symmetric: nan,
        approximate: true,
        forward_se: Some(se),
    })
}

/// Spread of encoder draws at one datapoint and how well they score under
/// the unnormalized posterior `p(z, x)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleSpread {
    /// Per-dimension sample standard deviation.
    pub std: Vec<f64>,
    /// Mean of `log p(z, x)` over draws inside the support.
    pub mean_log_joint: f64,
    /// Fraction of draws where `p(z, x) = 0`.
    pub outside_support: f64,
}

pub fn sample_spread(
    encoder: &Encoder,
    model: &dyn GenerativeModel,
    xs: &[DVector<f64>],
    samples: usize,
    rng: &RngStream,
) -> Vec<SampleSpread> {
    xs.par_iter()
        .enumerate()
        .map(|(j, x)| {
            let zs = encoder.sample(x, samples, &mut rng.derive(j as u64));
            let n = zs.len() as f64;
            let p = encoder.latent_dim();
            let mean = zs.iter().fold(DVector::zeros(p), |a, z| a + z) / n;
            let std =
                (0..p).map(|i| (zs.iter().map(|z| (z[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()).collect();
            let lj: Vec<f64> = zs.iter().map(|z| model.log_joint(x, z)).filter(|v| v.is_finite()).collect();
            SampleSpread { std, mean_log_joint: mean_of(&lj), outside_support: 1.0 - lj.len() as f64 / n }
        })
        .collect()
}
