use nalgebra::DVector;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{SamplerStore, StoreMode, StoredRun};
use crate::encoder::Encoder;
use crate::numkit::{log_sum_exp, resample, NormalizedWeights, ResampleScheme, RngStream};
use crate::{Error, Result};

/// A minibatch gradient contribution `∇̂_j`, aligned with the encoder parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    pub label: &'static str,
    /// Number of sampler runs that entered the estimate.
    pub runs_used: usize,
    /// Shannon entropy of the normalized per-run weights.
    pub weight_entropy: f64,
}

impl GradientEstimate {
    pub fn new(grad: Vec<f64>, label: &'static str, runs_used: usize, weight_entropy: f64) -> Result<Self> {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        Ok(Self { grad, label, runs_used, weight_entropy })
    }
}

fn entropy(w: &[f64]) -> f64 {
    -w.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Normalized `Ĉ` ratios from a list of `log Ĉ` values.
fn c_ratios(log_cs: &[f64]) -> Result<Vec<f64>> {
    let total = log_sum_exp(log_cs)?;
    Ok(log_cs.iter().map(|l| (l - total).exp()).collect())
}

fn add_scaled(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

/// `−scale · Σ_k w^k ∇ log q(z^k | x)` for one stored run.
fn run_term(enc: &Encoder, x: &DVector<f64>, run: &StoredRun, scale: f64) -> Vec<f64> {
    let coeffs: Vec<f64> = run.weights.iter().map(|w| -scale * w).collect();
    enc.score_grad(x, &run.atoms, &coeffs)
}

fn require(store: &SamplerStore, estimator: &'static str, ok: &[StoreMode]) -> Result<()> {
    if !ok.contains(&store.mode) {
        return Err(Error::WrongStoreMode { estimator, mode: store.mode.label() });
    }
    if store.is_empty() {
        return Err(Error::EmptyStore(store.datapoint));
    }
    Ok(())
}

/// `Σ_m Ĉ_m (Σ_k w_m^k f(z_m^k)) / Σ_m Ĉ_m` with `f = −∇_φ log q_φ(·|x)`.
pub fn grad_estimate_a(store: &SamplerStore, enc: &Encoder, x: &DVector<f64>) -> Result<GradientEstimate> {
    require(store, "a", &[StoreMode::A])?;
    let log_cs: Vec<f64> = store.records.iter().map(|r| r.log_c).collect();
    let ratios = c_ratios(&log_cs)?;
    let mut grad = vec![0.0; enc.num_params()];
    for (run, r) in store.records.iter().zip(&ratios) {
        if *r > 0.0 {
            add_scaled(&mut grad, &run_term(enc, x, run, *r));
        }
    }
    GradientEstimate::new(grad, "a", ratios.len(), entropy(&ratios))
}

/// `Σ_m Ĉ_m f(z̃_m) / Σ_m Ĉ_m` over one retained atom per run.
pub fn grad_estimate_b(store: &SamplerStore, enc: &Encoder, x: &DVector<f64>) -> Result<GradientEstimate> {
    require(store, "b", &[StoreMode::A, StoreMode::B])?;
    let log_cs: Vec<f64> = store.retained.iter().map(|a| a.log_c).collect();
    let ratios = c_ratios(&log_cs)?;
    let zs: Vec<DVector<f64>> = store.retained.iter().map(|a| a.z.clone()).collect();
    let coeffs: Vec<f64> = ratios.iter().map(|r| -r).collect();
    GradientEstimate::new(enc.score_grad(x, &zs, &coeffs), "b", ratios.len(), entropy(&ratios))
}

/// Latest run (averaged over the window) scaled by `Ĉ / mean Ĉ`, where the
/// mean runs over every appended run.
pub fn grad_estimate_c(store: &SamplerStore, enc: &Encoder, x: &DVector<f64>) -> Result<GradientEstimate> {
    require(store, "c", &[StoreMode::C])?;
    let log_mean = store.log_mean_c();
    let n = store.records.len() as f64;
    let mut grad = vec![0.0; enc.num_params()];
    let mut scales = Vec::with_capacity(store.records.len());
    for run in &store.records {
        let s = (run.log_c - log_mean).exp() / n;
        scales.push(s);
        add_scaled(&mut grad, &run_term(enc, x, run, s));
    }
    let total: f64 = scales.iter().sum();
    let norm: Vec<f64> = scales.iter().map(|s| s / total).collect();
    GradientEstimate::new(grad, "c", store.records.len(), entropy(&norm))
}

/// How records are drawn for a cheaper version of `∇̂(a)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Subsample {
    /// `draws` records with replacement, proportional to `Ĉ`.
    CProportional { draws: usize },
    /// A uniform subset of `size` records without replacement.
    Uniform { size: usize },
}

/// Indices of stored records selected by `how`; each selected record
/// receives equal weight.
pub fn subsample_records(store: &SamplerStore, how: Subsample, rng: &mut RngStream) -> Result<Vec<usize>> {
    require(store, "subsample", &[StoreMode::A])?;
    let m = store.records.len();
    match how {
        Subsample::CProportional { draws } => {
            let log_cs: Vec<f64> = store.records.iter().map(|r| r.log_c).collect();
            let w = NormalizedWeights::new(renormalize(c_ratios(&log_cs)?))?;
            Ok(resample(&w, draws.max(1), ResampleScheme::Multinomial, rng))
        }
        Subsample::Uniform { size } => Ok(index::sample(rng, m, size.clamp(1, m)).into_vec()),
    }
}

fn renormalize(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Evenly weighted average of per-run estimates over subsampled records.
/// With `Subsample::Uniform { size: 1 }` this is the naive estimator that
/// ignores `Ĉ`.
pub fn grad_estimate_subsampled(
    store: &SamplerStore,
    enc: &Encoder,
    x: &DVector<f64>,
    how: Subsample,
    rng: &mut RngStream,
) -> Result<GradientEstimate> {
    let picks = subsample_records(store, how, rng)?;
    let scale = 1.0 / picks.len() as f64;
    let mut grad = vec![0.0; enc.num_params()];
    let mut counts = vec![0usize; store.records.len()];
    for &i in &picks {
        counts[i] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        if *c > 0 {
            add_scaled(&mut grad, &run_term(enc, x, &store.records[i], scale * *c as f64));
        }
    }
    let freq: Vec<f64> = counts.iter().map(|c| *c as f64 * scale).collect();
    let label = match how {
        Subsample::CProportional { .. } => "a-mstar",
        Subsample::Uniform { .. } => "subset",
    };
    GradientEstimate::new(grad, label, picks.len(), entropy(&freq))
}
