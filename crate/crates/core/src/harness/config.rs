use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderSpec;
use crate::models::{ConjugateGaussian1D, DesignSpec, GaussianLinearModel, GenerativeModel, TwoMoonsModel};
use crate::numkit::RngStream;
use crate::smc::{MutationConfig, SmcConfig, TemperSchedule};
use crate::trainers::{Method, TrainerConfig};
use crate::{Error, Result};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "SMCWAKE_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Conjugate {
        #[serde(default = "ten")]
        prior_std: f64,
        #[serde(default = "one")]
        noise_std: f64,
    },
    GaussianLinear {
        latent_dim: usize,
        obs_dim: usize,
        #[serde(default = "one")]
        prior_std: f64,
        #[serde(default = "one")]
        noise_std: f64,
        #[serde(default = "random_design")]
        design: DesignSpec,
        /// Seed of the design matrix, independent of the experiment seed so
        /// that runs with different seeds share one model.
        #[serde(default)]
        seed: u64,
    },
    TwoMoons,
}

fn ten() -> f64 {
    10.0
}

fn one() -> f64 {
    1.0
}

fn random_design() -> DesignSpec {
    DesignSpec::Random
}

impl ModelSpec {
    pub fn conjugate() -> Self {
        ModelSpec::Conjugate { prior_std: 10.0, noise_std: 1.0 }
    }

    pub fn build(&self) -> Result<Box<dyn GenerativeModel>> {
        Ok(match self {
            ModelSpec::Conjugate { prior_std, noise_std } => {
                if !(*prior_std > 0.0 && *noise_std > 0.0) {
                    return Err(Error::Config("model standard deviations must be positive".into()));
                }
                Box::new(ConjugateGaussian1D { prior_std: *prior_std, noise_std: *noise_std })
            }
            ModelSpec::GaussianLinear { .. } => Box::new(self.linear()?.expect("linear spec")),
            ModelSpec::TwoMoons => Box::new(TwoMoonsModel),
        })
    }

    /// The concrete linear model, when this spec describes one.
    pub fn linear(&self) -> Result<Option<GaussianLinearModel>> {
        match self {
            ModelSpec::GaussianLinear { latent_dim, obs_dim, prior_std, noise_std, design, seed } => {
                let mut rng = RngStream::new(*seed, 0xde51);
                GaussianLinearModel::from_spec(design, *obs_dim, *latent_dim, *prior_std, *noise_std, &mut rng)
                    .map(Some)
            }
            _ => Ok(None),
        }
    }
}

/// Settings for the Monte Carlo forward KL used when no closed form exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Particles of the reference LT-SMC run per datapoint.
    #[serde(default = "reference_particles")]
    pub reference_particles: usize,
    /// Encoder draws per datapoint written to `samples.csv`.
    #[serde(default = "plot_samples")]
    pub plot_samples: usize,
}

fn reference_particles() -> usize {
    1024
}

fn plot_samples() -> usize {
    200
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { reference_particles: reference_particles(), plot_samples: plot_samples() }
    }
}

impl EvaluationConfig {
    pub fn reference_smc(&self) -> SmcConfig {
        SmcConfig::new(self.reference_particles, TemperSchedule::adaptive(0.5), MutationConfig::new(20, 0.1))
    }
}

/// Everything one `run` needs. Together with the seed it fully determines
/// every output byte except wall-clock columns when `timing` is on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    /// Dataset size.
    pub n: usize,
    #[serde(default)]
    pub encoder: EncoderSpec,
    /// The trainer's own `seed` is replaced by the experiment seed.
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    /// Output directory; defaults to `$SMCWAKE_OUT_DIR/<name>` or `out/<name>`.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Record wall-clock milliseconds in the metrics file.
    #[serde(default)]
    pub timing: bool,
    /// Encoder and store checkpoints every this many steps; 0 only writes the final encoder.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Append per-run LT-SMC diagnostics to `diagnostics.jsonl`.
    #[serde(default = "yes")]
    pub diagnostics: bool,
}

fn default_name() -> String {
    "experiment".into()
}

fn yes() -> bool {
    true
}

/// Command-line values that win over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub method: Option<Method>,
    pub out: Option<PathBuf>,
    pub steps: Option<usize>,
    pub particles: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(name: &str, model: ModelSpec, n: usize, encoder: EncoderSpec, trainer: TrainerConfig) -> Self {
        Self {
            name: name.into(),
            seed: 0,
            model,
            n,
            encoder,
            trainer,
            evaluation: EvaluationConfig::default(),
            out_dir: None,
            timing: false,
            checkpoint_every: 0,
            diagnostics: true,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.method {
            self.trainer.method = m;
        }
        if let Some(out) = &o.out {
            self.out_dir = Some(out.clone());
        }
        if let Some(s) = o.steps {
            self.trainer.steps = s;
        }
        if let Some(k) = o.particles {
            self.trainer.smc.particles = k;
            if self.trainer.is_particles.is_some() {
                self.trainer.is_particles = Some(k);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        let mut t = self.trainer.clone();
        t.seed = self.seed;
        t.validate()?;
        if let ModelSpec::GaussianLinear { latent_dim, obs_dim, .. } = self.model {
            if latent_dim == 0 || obs_dim == 0 {
                return Err(Error::Config("model dimensions must be positive".into()));
            }
        }
        Ok(())
    }

    /// Trainer settings with the experiment seed in place.
    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig { seed: self.seed, ..self.trainer.clone() }
    }

    pub fn resolve_out_dir(&self) -> PathBuf {
        if let Some(d) = &self.out_dir {
            return d.clone();
        }
        let root = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from);
        root.join(&self.name)
    }
}
