use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use crate::encoder::Encoder;
use crate::models::GenerativeModel;
use crate::numkit::{normalize, GaussianDist, LogWeights, RngStream};
use crate::{Error, Result};

/// An explicit proposal density with a sampler.
pub trait Proposal: Sync {
    fn sample(&self, n: usize, rng: &mut RngStream) -> Vec<DVector<f64>>;
    fn log_prob(&self, z: &DVector<f64>) -> f64;
}

impl Proposal for GaussianDist {
    fn sample(&self, n: usize, rng: &mut RngStream) -> Vec<DVector<f64>> {
        (0..n).map(|_| GaussianDist::sample(self, rng)).collect()
    }

    fn log_prob(&self, z: &DVector<f64>) -> f64 {
        self.log_pdf(z).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Uniform density on an axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformBox {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl UniformBox {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidArgument("empty interval".into()));
        }
        Ok(Self { lo: DVector::from_element(1, lo), hi: DVector::from_element(1, hi) })
    }
}

impl Proposal for UniformBox {
    fn sample(&self, n: usize, rng: &mut RngStream) -> Vec<DVector<f64>> {
        (0..n).map(|_| DVector::from_fn(self.lo.len(), |i, _| rng.random_range(self.lo[i]..self.hi[i]))).collect()
    }

    fn log_prob(&self, z: &DVector<f64>) -> f64 {
        let inside = z.iter().zip(self.lo.iter().zip(self.hi.iter())).all(|(v, (a, b))| *v >= *a && *v < *b);
        if inside {
            -self.lo.iter().zip(self.hi.iter()).map(|(a, b)| (b - a).ln()).sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// An encoder conditioned on a fixed observation.
pub struct EncoderAt<'a> {
    pub encoder: &'a Encoder,
    pub x: DVector<f64>,
}

impl Proposal for EncoderAt<'_> {
    fn sample(&self, n: usize, rng: &mut RngStream) -> Vec<DVector<f64>> {
        self.encoder.sample(&self.x, n, rng)
    }

    fn log_prob(&self, z: &DVector<f64>) -> f64 {
        self.encoder.log_prob(&self.x, z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateEstimate {
    pub mean: f64,
    /// Standard error of `mean`.
    pub se: f64,
    /// Spread of a single replicate.
    pub sd: f64,
    pub replicates: usize,
    /// Replicates discarded because every weight was zero.
    pub dropped: usize,
}

/// One replicate of `−Σ_i w^i log q(z^i)` with self-normalized weights
/// `w ∝ p(z, x) / q(z)`. `None` when every weight vanishes.
fn replicate(
    q: &dyn Proposal,
    model: &dyn GenerativeModel,
    x: &DVector<f64>,
    k: usize,
    rng: &mut RngStream,
) -> Option<f64> {
    let zs = q.sample(k, rng);
    let log_q: Vec<f64> = zs.iter().map(|z| q.log_prob(z)).collect();
    let log_w: Vec<f64> = zs.iter().zip(&log_q).map(|(z, lq)| model.log_joint(x, z) - lq).collect();
    let (w, _) = normalize(&LogWeights::new(log_w).ok()?).ok()?;
    Some(-w.values().iter().zip(&log_q).filter(|(w, _)| **w > 0.0).map(|(w, lq)| w * lq).sum::<f64>())
}

/// Monte Carlo estimate of the stop-gradient surrogate objective
/// `E[−Σ_i w^i log q(z^i)]`, `z^i ~ q`. Replicate `r` draws from
/// `rng.derive(r)`; failed replicates are replaced by further ones, up to ten
/// times the requested count.
pub fn surrogate_objective(
    q: &dyn Proposal,
    model: &dyn GenerativeModel,
    x: &DVector<f64>,
    k: usize,
    replicates: usize,
    rng: &RngStream,
) -> Result<SurrogateEstimate> {
    if k == 0 || replicates == 0 {
        return Err(Error::InvalidArgument("need K ≥ 1 and at least one replicate".into()));
    }
    let mut values = Vec::with_capacity(replicates);
    let mut next = 0u64;
    let mut dropped = 0;
    let limit = 10 * replicates as u64;
    while values.len() < replicates && next < limit {
        let want = ((replicates - values.len()) as u64).min(limit - next);
        let batch: Vec<Option<f64>> =
            (next..next + want).into_par_iter().map(|r| replicate(q, model, x, k, &mut rng.derive(r))).collect();
        next += want;
        for v in batch {
            match v {
                Some(v) => values.push(v),
                None => dropped += 1,
            }
        }
    }
    if values.is_empty() {
        return Err(Error::UndefinedGradient);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SurrogateEstimate { mean, se: sd / n.sqrt(), sd, replicates: values.len(), dropped })
}
