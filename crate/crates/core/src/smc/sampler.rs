use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::mutation::{sweep_walkers, Walker};
use super::{MutationConfig, MutationTarget, TemperSchedule};
use crate::models::GenerativeModel;
use crate::numkit::{ess, log_sum_exp, normalize, resample, LogWeights, NormalizedWeights, ResampleScheme, RngStream};
use crate::{Error, Result};

pub const DEFAULT_MAX_STAGES: usize = 1000;
const MIN_INCREMENT: f64 = 1e-6;
const BISECTION_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmcConfig {
    pub particles: usize,
    #[serde(default)]
    pub schedule: TemperSchedule,
    #[serde(default)]
    pub mutation: MutationConfig,
    /// Resample when the ESS falls below this fraction of K.
    #[serde(default = "half")]
    pub resample_ess_fraction: f64,
    #[serde(default)]
    pub scheme: ResampleScheme,
    #[serde(default = "default_max_stages")]
    pub max_stages: usize,
}

fn half() -> f64 {
    0.5
}

fn default_max_stages() -> usize {
    DEFAULT_MAX_STAGES
}

impl SmcConfig {
    pub fn new(particles: usize, schedule: TemperSchedule, mutation: MutationConfig) -> Self {
        Self {
            particles,
            schedule,
            mutation,
            resample_ess_fraction: 0.5,
            scheme: ResampleScheme::Systematic,
            max_stages: DEFAULT_MAX_STAGES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::InvalidArgument("LT-SMC needs at least two particles".into()));
        }
        if self.mutation.steps == 0 || !(self.mutation.step_std > 0.0) {
            return Err(Error::InvalidArgument("mutation needs steps ≥ 1 and step_std > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.resample_ess_fraction) {
            return Err(Error::InvalidArgument("resample_ess_fraction must lie in [0, 1]".into()));
        }
        if self.max_stages < 1 {
            return Err(Error::InvalidArgument("max_stages must be positive".into()));
        }
        self.schedule.validate(self.particles)
    }
}

/// K weighted atoms at one tempering stage.
#[derive(Clone, Debug)]
pub struct ParticleSystem {
    pub atoms: Vec<DVector<f64>>,
    /// Cached `log p(x | z)` per atom.
    pub log_liks: Vec<f64>,
    /// Cached `log p(z)` per atom.
    pub log_priors: Vec<f64>,
    /// Unnormalized incremental log-weights of the latest stage.
    pub log_weights: Vec<f64>,
    pub weights: NormalizedWeights,
    /// Log of the carried weights after the latest resampling decision.
    pub log_carried: Vec<f64>,
    pub temperature: f64,
    pub ess: f64,
}

impl ParticleSystem {
    /// `K` prior draws with unit weights at temperature 0.
    pub fn from_prior(model: &dyn GenerativeModel, x: &DVector<f64>, k: usize, rng: &RngStream) -> Self {
        let atoms: Vec<DVector<f64>> = (0..k).map(|i| model.sample_prior(&mut rng.derive(i as u64))).collect();
        let log_priors = atoms.iter().map(|z| model.prior_logpdf(z)).collect();
        let log_liks = atoms.iter().map(|z| model.log_lik(x, z)).collect();
        Self {
            atoms,
            log_liks,
            log_priors,
            log_weights: vec![0.0; k],
            weights: NormalizedWeights::uniform(k),
            log_carried: vec![0.0; k],
            temperature: 0.0,
            ess: k as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Increment `δ` that keeps the conditional ESS at `ess_min`.
    pub fn next_increment(&self, ess_min: f64) -> f64 {
        solve_next_temperature(&self.log_carried, &self.log_liks, self.temperature, ess_min)
    }
}

/// Product of the incremental factor `exp(δ · ll)` with a log weight, where a
/// zero increment never touches the likelihood.
fn increment(log_w: f64, delta: f64, ll: f64) -> f64 {
    if delta == 0.0 || log_w == f64::NEG_INFINITY {
        log_w
    } else {
        log_w + delta * ll
    }
}

/// Conditional ESS `K (Σ ŵ G)² / (Σ ŵ · Σ ŵ G²)` with `G = exp(δ · ll)`.
pub fn conditional_ess(log_carried: &[f64], log_liks: &[f64], delta: f64) -> f64 {
    let k = log_carried.len() as f64;
    let a: Vec<f64> = log_carried.iter().zip(log_liks).map(|(w, l)| increment(*w, delta, *l)).collect();
    let b: Vec<f64> = log_carried.iter().zip(log_liks).map(|(w, l)| increment(*w, 2.0 * delta, *l)).collect();
    let (Ok(la), Ok(lb), Ok(l0)) = (log_sum_exp(&a), log_sum_exp(&b), log_sum_exp(log_carried)) else {
        return 0.0;
    };
    k * (2.0 * la - lb - l0).exp()
}

/// Bisection for the tempering increment. Returns `1 − τ` when the ESS at the
/// full step is still at least `ess_min`, and never less than `1e-6`.
pub fn solve_next_temperature(log_carried: &[f64], log_liks: &[f64], tau: f64, ess_min: f64) -> f64 {
    let remaining = 1.0 - tau;
    let k = log_carried.len() as f64;
    let floor = MIN_INCREMENT.min(remaining);
    if conditional_ess(log_carried, log_liks, remaining) >= ess_min {
        return remaining;
    }
    // `lo` always keeps ESS ≥ ess_min, so the answer errs on the safe side
    let (mut lo, mut hi) = (0.0, remaining);
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        let e = conditional_ess(log_carried, log_liks, mid);
        if e >= ess_min {
            lo = mid;
            if e - ess_min < 1e-6 * k {
                break;
            }
        } else {
            hi = mid;
        }
    }
    lo.max(floor)
}

/// Output of one LT-SMC run: the final weighted particle set and `log Ĉ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmcRunRecord {
    pub atoms: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub log_c: f64,
    pub temperatures: Vec<f64>,
    pub ess_trace: Vec<f64>,
    pub resample_count: usize,
    pub acceptance_rate: f64,
    /// Likelihood evaluations spent, including initialization.
    pub likelihood_evals: usize,
    /// True when the stage cap forced the final jump to τ = 1.
    pub capped: bool,
}

impl SmcRunRecord {
    pub fn particles(&self) -> usize {
        self.atoms.len()
    }

    pub fn final_ess(&self) -> f64 {
        *self.ess_trace.last().unwrap_or(&(self.atoms.len() as f64))
    }

    pub fn normalized_weights(&self) -> NormalizedWeights {
        NormalizedWeights::new(self.weights.clone()).expect("record weights are normalized")
    }

    /// `Σ_k w^k z^k`.
    pub fn weighted_mean(&self) -> DVector<f64> {
        let p = self.atoms.first().map_or(0, |a| a.len());
        self.atoms.iter().zip(&self.weights).fold(DVector::zeros(p), |acc, (z, w)| acc + z * *w)
    }

    pub fn weighted_covariance(&self) -> nalgebra::DMatrix<f64> {
        let m = self.weighted_mean();
        let p = m.len();
        let mut c = nalgebra::DMatrix::zeros(p, p);
        for (z, w) in self.atoms.iter().zip(&self.weights) {
            let r = z - &m;
            c.ger(*w, &r, &r, 1.0);
        }
        c
    }
}

/// Likelihood-tempered SMC from the prior to the posterior of `x`.
///
/// Each stage decides whether to resample, picks the next temperature,
/// reweights by `p(x|z)^{Δτ}` and mutates; `log Ĉ` accumulates
/// `log Σ w̃ − log Σ ŵ` per stage. All randomness is derived from `rng`
/// without consuming it, so a run depends only on the stream identity.
pub fn lt_smc_run(
    model: &dyn GenerativeModel,
    x: &DVector<f64>,
    cfg: &SmcConfig,
    rng: &RngStream,
) -> Result<SmcRunRecord> {
    cfg.validate()?;
    let k = cfg.particles;
    let mut sys = ParticleSystem::from_prior(model, x, k, &rng.derive(u64::MAX));
    let mut temps = vec![0.0];
    let mut ess_trace = Vec::new();
    let mut log_c = 0.0;
    let mut resample_count = 0;
    let mut accepted = 0usize;
    let mut proposals = 0usize;
    let mut evals = k;
    let mut capped = false;
    let ess_resample = cfg.resample_ess_fraction * k as f64;
    let mut stage = 0usize;

    while sys.temperature < 1.0 {
        stage += 1;
        let stage_rng = rng.derive(stage as u64);

        if sys.ess < ess_resample {
            let anc = resample(&sys.weights, k, cfg.scheme, &mut stage_rng.derive(u64::MAX));
            sys.atoms = anc.iter().map(|&a| sys.atoms[a].clone()).collect();
            sys.log_liks = anc.iter().map(|&a| sys.log_liks[a]).collect();
            sys.log_priors = anc.iter().map(|&a| sys.log_priors[a]).collect();
            sys.log_carried = vec![0.0; k];
            resample_count += 1;
        } else {
            sys.log_carried = sys.weights.values().iter().map(|w| w.ln()).collect();
        }

        let tau = sys.temperature;
        let mut next = match &cfg.schedule {
            TemperSchedule::Fixed { temperatures } => temperatures[stage],
            TemperSchedule::Adaptive { ess_fraction } => {
                let d = sys.next_increment(ess_fraction * k as f64);
                if tau + d >= 1.0 - 1e-12 {
                    1.0
                } else {
                    tau + d
                }
            }
        };
        if stage >= cfg.max_stages && next < 1.0 {
            next = 1.0;
            capped = true;
        }
        let delta = next - tau;

        let mut walkers: Vec<Walker> = sys
            .atoms
            .drain(..)
            .zip(sys.log_priors.iter().zip(&sys.log_liks))
            .map(|(z, (lp, ll))| Walker { z, lp: *lp, ll: *ll })
            .collect();
        let mutate = |walkers: &mut Vec<Walker>, at: f64| -> usize {
            sweep_walkers(walkers, model, x, at, &cfg.mutation, &stage_rng)
        };
        if cfg.mutation.target == MutationTarget::PreviousTemperature {
            accepted += mutate(&mut walkers, tau);
            proposals += k * cfg.mutation.steps;
            evals += k * cfg.mutation.steps;
        }
        let log_w: Vec<f64> = sys.log_carried.iter().zip(&walkers).map(|(w, wk)| increment(*w, delta, wk.ll)).collect();
        if cfg.mutation.target == MutationTarget::NewTemperature {
            accepted += mutate(&mut walkers, next);
            proposals += k * cfg.mutation.steps;
            evals += k * cfg.mutation.steps;
        }

        let lw = LogWeights::new(log_w).map_err(|_| Error::ParticleCollapse { stage, temperature: next })?;
        let (w, _) = normalize(&lw).map_err(|_| Error::ParticleCollapse { stage, temperature: next })?;
        log_c += log_sum_exp(lw.values())? - log_sum_exp(&sys.log_carried)?;

        sys.atoms = Vec::with_capacity(k);
        sys.log_liks.clear();
        sys.log_priors.clear();
        for wk in walkers {
            sys.atoms.push(wk.z);
            sys.log_liks.push(wk.ll);
            sys.log_priors.push(wk.lp);
        }
        sys.ess = ess(&w);
        sys.weights = w;
        sys.log_weights = lw.into_inner();
        sys.temperature = next;
        temps.push(next);
        ess_trace.push(sys.ess);
    }

    if !log_c.is_finite() {
        return Err(Error::ParticleCollapse { stage, temperature: 1.0 });
    }
    Ok(SmcRunRecord {
        atoms: sys.atoms,
        weights: sys.weights.into_inner(),
        log_c,
        temperatures: temps,
        ess_trace,
        resample_count,
        acceptance_rate: if proposals == 0 { 0.0 } else { accepted as f64 / proposals as f64 },
        likelihood_evals: evals,
        capped,
    })
}
