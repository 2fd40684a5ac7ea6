use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::GenerativeModel;
use crate::numkit::RngStream;

/// Which tempered target the mutation kernel leaves invariant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationTarget {
    /// Mutate at the temperature just reached; the incremental weight is
    /// evaluated before the move.
    #[default]
    NewTemperature,
    /// Mutate at the temperature being left; the incremental weight is
    /// evaluated after the move.
    PreviousTemperature,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationConfig {
    pub steps: usize,
    pub step_std: f64,
    #[serde(default)]
    pub target: MutationTarget,
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self { steps: 5, step_std: 0.1f64.sqrt(), target: MutationTarget::NewTemperature }
    }
}

impl MutationConfig {
    pub fn new(steps: usize, step_std: f64) -> Self {
        Self { steps, step_std, target: MutationTarget::NewTemperature }
    }

    /// Five steps with proposal variance 0.1².
    pub fn two_moons() -> Self {
        Self::new(5, 0.1)
    }

    /// 100 steps of std 0.01 (nested-MCMC Gaussian experiment).
    pub fn gaussian_long() -> Self {
        Self::new(100, 0.01)
    }

    /// 10 steps of std 0.1 (many-vs-one Gaussian experiment).
    pub fn gaussian_short() -> Self {
        Self::new(10, 0.1)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "two-moons" => Some(Self::two_moons()),
            "gaussian-long" => Some(Self::gaussian_long()),
            "gaussian-short" => Some(Self::gaussian_short()),
            _ => None,
        }
    }
}

/// `log p(z) + τ log p(x | z)`, with the likelihood dropped entirely at τ = 0.
pub fn tempered_log_target(model: &dyn GenerativeModel, x: &DVector<f64>, z: &DVector<f64>, tau: f64) -> f64 {
    let lp = model.prior_logpdf(z);
    if tau == 0.0 || lp == f64::NEG_INFINITY {
        return lp;
    }
    lp + tau * model.log_lik(x, z)
}

pub(crate) fn tempered(lp: f64, ll: f64, tau: f64) -> f64 {
    if tau == 0.0 || lp == f64::NEG_INFINITY {
        lp
    } else {
        lp + tau * ll
    }
}

/// One particle's state during a sweep: position, prior log-density and
/// log-likelihood.
#[derive(Clone, Debug)]
pub(crate) struct Walker {
    pub z: DVector<f64>,
    pub lp: f64,
    pub ll: f64,
}

/// Random-walk Metropolis-Hastings, `steps` proposals per walker, invariant for
/// the tempered target at `tau`. Walker `i` draws from `rng.derive(i)`.
/// Returns the number of accepted proposals.
pub(crate) fn sweep_walkers(
    walkers: &mut [Walker],
    model: &dyn GenerativeModel,
    x: &DVector<f64>,
    tau: f64,
    cfg: &MutationConfig,
    rng: &RngStream,
) -> usize {
    let body = |(i, w): (usize, &mut Walker)| -> usize {
        let mut r = rng.derive(i as u64);
        let mut accepted = 0;
        let mut cur = tempered(w.lp, w.ll, tau);
        for _ in 0..cfg.steps {
            let prop = DVector::from_fn(w.z.len(), |d, _| {
                let e: f64 = StandardNormal.sample(&mut r);
                w.z[d] + cfg.step_std * e
            });
            let lp = model.prior_logpdf(&prop);
            let u: f64 = r.random();
            if lp == f64::NEG_INFINITY {
                continue;
            }
            let ll = model.log_lik(x, &prop);
            let new = tempered(lp, ll, tau);
            let log_ratio = new - cur;
            if new > f64::NEG_INFINITY && (log_ratio >= 0.0 || u.ln() < log_ratio) {
                w.z = prop;
                w.lp = lp;
                w.ll = ll;
                cur = new;
                accepted += 1;
            }
        }
        accepted
    };
    let work = walkers.len() * cfg.steps;
    if work >= 4096 {
        walkers.par_iter_mut().enumerate().map(body).sum()
    } else {
        walkers.iter_mut().enumerate().map(body).sum()
    }
}

/// Mutates `atoms` in place by a sweep invariant for `p(z) p(x|z)^tau`.
/// Returns the acceptance rate.
pub fn mh_mutation_sweep(
    atoms: &mut [DVector<f64>],
    model: &dyn GenerativeModel,
    x: &DVector<f64>,
    tau: f64,
    cfg: &MutationConfig,
    rng: &RngStream,
) -> f64 {
    let mut walkers: Vec<Walker> =
        atoms.iter().map(|z| Walker { z: z.clone(), lp: model.prior_logpdf(z), ll: model.log_lik(x, z) }).collect();
    let acc = sweep_walkers(&mut walkers, model, x, tau, cfg, rng);
    for (a, w) in atoms.iter_mut().zip(walkers) {
        *a = w.z;
    }
    if atoms.is_empty() || cfg.steps == 0 {
        0.0
    } else {
        acc as f64 / (atoms.len() * cfg.steps) as f64
    }
}
