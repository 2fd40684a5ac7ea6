use serde::{Deserialize, Serialize};

use crate::encoder::OptimizerMode;
use crate::estimators::{StoreMode, Subsample};
use crate::smc::SmcConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SmcWakeA,
    SmcWakeB,
    SmcWakeC,
    SmcPimhWake,
    Rws,
    DefensiveRws,
    Msc,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::SmcWakeA,
        Method::SmcWakeB,
        Method::SmcWakeC,
        Method::SmcPimhWake,
        Method::Rws,
        Method::DefensiveRws,
        Method::Msc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::SmcWakeA => "smc-wake-a",
            Method::SmcWakeB => "smc-wake-b",
            Method::SmcWakeC => "smc-wake-c",
            Method::SmcPimhWake => "smc-pimh-wake",
            Method::Rws => "rws",
            Method::DefensiveRws => "defensive-rws",
            Method::Msc => "msc",
        }
    }

    pub fn store_mode(self) -> Option<StoreMode> {
        match self {
            Method::SmcWakeA => Some(StoreMode::A),
            Method::SmcWakeB => Some(StoreMode::B),
            Method::SmcWakeC => Some(StoreMode::C),
            _ => None,
        }
    }

    pub fn uses_smc(self) -> bool {
        matches!(self, Method::SmcWakeA | Method::SmcWakeB | Method::SmcWakeC | Method::SmcPimhWake)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.label() == s).ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefreshOrder {
    /// Cycle through the dataset from a random starting point.
    #[default]
    RoundRobin,
    /// Independent uniform picks.
    Random,
    /// Refresh exactly the datapoints of the current minibatch.
    Minibatch,
}

/// When and for which datapoints LT-SMC is rerun.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefreshPolicy {
    /// Runs per datapoint before the first gradient step.
    #[serde(default = "one")]
    pub initial_runs: usize,
    /// Refresh every this many steps; 0 never refreshes.
    #[serde(default = "one")]
    pub every: usize,
    /// Datapoints refreshed each time (ignored for `Minibatch` order).
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default)]
    pub order: RefreshOrder,
}

fn one() -> usize {
    1
}

impl Default for RefreshPolicy {
    fn default() -> Self {
        Self { initial_runs: 1, every: 1, count: 1, order: RefreshOrder::RoundRobin }
    }
}

impl RefreshPolicy {
    /// One sampler at random every 10 gradient steps.
    pub fn two_moons() -> Self {
        Self { initial_runs: 1, every: 10, count: 1, order: RefreshOrder::Random }
    }

    /// One random datapoint per gradient step.
    pub fn gaussian() -> Self {
        Self { initial_runs: 1, every: 1, count: 1, order: RefreshOrder::Random }
    }

    pub fn frozen(initial_runs: usize) -> Self {
        Self { initial_runs, every: 0, count: 0, order: RefreshOrder::RoundRobin }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "two-moons" => Some(Self::two_moons()),
            "gaussian" => Some(Self::gaussian()),
            _ => None,
        }
    }
}

/// Estimator variant used by the SMC-Wake methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// For `smc-wake-a`: `Ĉ`-proportional record draws per step, capped at
    /// the number of stored runs. 0 evaluates the exact sum over all runs.
    #[serde(default = "sixteen")]
    pub mstar: usize,
    /// For `smc-wake-a`: evenly weighted uniform subset of this size instead
    /// of `Ĉ`-proportional draws. `Some(1)` is the naive estimator.
    #[serde(default)]
    pub subset: Option<usize>,
    /// For `smc-wake-c`: number of latest runs averaged in the numerator.
    #[serde(default = "one")]
    pub window: usize,
}

fn sixteen() -> usize {
    16
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { mstar: 16, subset: None, window: 1 }
    }
}

impl EstimatorConfig {
    pub fn exact() -> Self {
        Self { mstar: 0, ..Self::default() }
    }

    pub fn naive() -> Self {
        Self { subset: Some(1), ..Self::default() }
    }

    /// Record selection for `smc-wake-a` given `m` stored runs.
    pub fn subsample(&self, m: usize) -> Option<Subsample> {
        match (self.subset, self.mstar) {
            (Some(size), _) => Some(Subsample::Uniform { size: size.min(m) }),
            (None, 0) => None,
            (None, d) => Some(Subsample::CProportional { draws: d.min(m) }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub method: Method,
    pub steps: usize,
    /// Datapoints per gradient step; 0 uses the full dataset.
    #[serde(default)]
    pub minibatch: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub optimizer: OptimizerMode,
    pub smc: SmcConfig,
    /// Importance samples for `rws`, `defensive-rws` and `msc`; defaults to
    /// the LT-SMC particle count.
    #[serde(default)]
    pub is_particles: Option<usize>,
    #[serde(default)]
    pub refresh: RefreshPolicy,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    /// MSC gradient as the weighted sum over all CIS particles.
    #[serde(default)]
    pub msc_weighted: bool,
    #[serde(default = "ten")]
    pub wake_retries: usize,
    #[serde(default = "hundred")]
    pub metrics_every: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    1e-3
}

fn ten() -> usize {
    10
}

fn hundred() -> usize {
    100
}

impl TrainerConfig {
    pub fn new(method: Method, steps: usize, smc: SmcConfig) -> Self {
        Self {
            method,
            steps,
            minibatch: 0,
            lr: default_lr(),
            optimizer: OptimizerMode::Adam,
            smc,
            is_particles: None,
            refresh: RefreshPolicy::default(),
            estimator: EstimatorConfig::default(),
            msc_weighted: false,
            wake_retries: 10,
            metrics_every: 100,
            seed: 0,
        }
    }

    pub fn is_k(&self) -> usize {
        self.is_particles.unwrap_or(self.smc.particles)
    }

    pub fn batch_size(&self, n: usize) -> usize {
        if self.minibatch == 0 {
            n
        } else {
            self.minibatch.min(n)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.method.uses_smc() {
            self.smc.validate()?;
            if self.refresh.initial_runs == 0 {
                return Err(Error::Config("refresh.initial_runs must be at least 1 so no store starts empty".into()));
            }
        } else if self.is_k() == 0 {
            return Err(Error::Config("importance-sample count must be positive".into()));
        }
        if self.estimator.window == 0 {
            return Err(Error::Config("estimator.window must be positive".into()));
        }
        if self.estimator.subset == Some(0) {
            return Err(Error::Config("estimator.subset must be positive".into()));
        }
        Ok(())
    }
}
