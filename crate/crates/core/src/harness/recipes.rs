use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

use super::compare::{compare_runs, Comparison};
use super::config::{ExperimentConfig, ModelSpec};
use super::run::{run_experiment, RunSummary, METRICS_FILE};
use crate::encoder::EncoderSpec;
use crate::models::{ConjugateGaussian1D, DesignSpec, GenerativeModel};
use crate::numkit::{GaussianDist, RngStream};
use crate::smc::{MutationConfig, SmcConfig, TemperSchedule};
use crate::trainers::{surrogate_objective, EstimatorConfig, Method, RefreshOrder, RefreshPolicy, TrainerConfig};
use crate::{Error, Result};

pub struct Recipe {
    pub name: &'static str,
    pub description: &'static str,
}

pub const RECIPES: &[Recipe] = &[
    Recipe { name: "conjugate", description: "SMC-Wake on the 1-D conjugate Gaussian model" },
    Recipe { name: "two-moons", description: "SMC-Wake, wake-phase and defensive wake-phase training on two moons" },
    Recipe {
        name: "gaussian-pimh-vs-msc",
        description: "SMC-PIMH-Wake against Markovian score climbing on a linear Gaussian model",
    },
    Recipe {
        name: "gaussian-many-vs-one",
        description: "many small samplers against one large sampler at equal likelihood budget",
    },
    Recipe {
        name: "circular-pathology",
        description: "surrogate objective of peaked proposals against the exact posterior",
    },
];

pub fn conjugate(seed: u64) -> ExperimentConfig {
    let smc = SmcConfig::new(64, TemperSchedule::adaptive(0.5), MutationConfig::default());
    let mut t = TrainerConfig::new(Method::SmcWakeA, 2000, smc);
    t.lr = 1e-2;
    let mut cfg = ExperimentConfig::new(
        "conjugate",
        ModelSpec::conjugate(),
        10,
        EncoderSpec::FullCov { hidden: vec![16], jitter: 1e-4 },
        t,
    );
    cfg.seed = seed;
    cfg
}

/// Shared budget of the two-moons comparison: every method sees the same
/// particle count, minibatch, learning rate and step count.
pub fn two_moons(seed: u64) -> Vec<ExperimentConfig> {
    let smc = SmcConfig::new(256, TemperSchedule::adaptive(0.5), MutationConfig::preset("two-moons").expect("preset"));
    [Method::SmcWakeA, Method::Rws, Method::DefensiveRws]
        .into_iter()
        .map(|m| {
            let mut t = TrainerConfig::new(m, 3000, smc.clone());
            t.minibatch = 16;
            t.lr = 1e-3;
            t.refresh = RefreshPolicy::two_moons();
            t.metrics_every = 1000;
            let mut cfg = ExperimentConfig::new(
                &format!("two-moons-{}", m.label()),
                ModelSpec::TwoMoons,
                50,
                EncoderSpec::Mixture { hidden: vec![64, 64], components: 8 },
                t,
            );
            cfg.evaluation.reference_particles = 512;
            cfg.seed = seed;
            cfg
        })
        .collect()
}

pub fn linear_spec() -> ModelSpec {
    ModelSpec::GaussianLinear {
        latent_dim: 8,
        obs_dim: 16,
        prior_std: 1.0,
        noise_std: 1.0,
        design: DesignSpec::Random,
        seed: 2024,
    }
}

/// SMC-PIMH-Wake and MSC with equal K, minibatch, learning rate and steps.
pub fn gaussian_pimh_vs_msc(seed: u64) -> Vec<ExperimentConfig> {
    let smc = SmcConfig::new(64, TemperSchedule::adaptive(0.5), MutationConfig::new(10, 0.1));
    [Method::SmcPimhWake, Method::Msc]
        .into_iter()
        .map(|m| {
            let mut t = TrainerConfig::new(m, 3000, smc.clone());
            t.minibatch = 5;
            t.lr = 1e-3;
            t.refresh = RefreshPolicy { initial_runs: 1, every: 1, count: 1, order: RefreshOrder::Random };
            t.metrics_every = 500;
            let mut cfg = ExperimentConfig::new(
                &format!("gaussian-{}", m.label()),
                linear_spec(),
                10,
                EncoderSpec::FullCov { hidden: vec![64, 64], jitter: 1e-4 },
                t,
            );
            cfg.seed = seed;
            cfg
        })
        .collect()
}

pub fn ill_conditioned_spec() -> ModelSpec {
    ModelSpec::GaussianLinear {
        latent_dim: 16,
        obs_dim: 32,
        prior_std: 1.0,
        noise_std: 1.0,
        design: DesignSpec::IllConditioned { s_min: 0.3, s_max: 30.0 },
        seed: 7,
    }
}

/// `samplers` frozen LT-SMC runs of `particles` each per datapoint, read
/// with the evenly weighted single-run estimator.
pub fn frozen_samplers(seed: u64, samplers: usize, particles: usize) -> ExperimentConfig {
    let smc = SmcConfig::new(particles, TemperSchedule::linear(20).expect("schedule"), MutationConfig::new(10, 0.1));
    let mut t = TrainerConfig::new(Method::SmcWakeA, 3000, smc);
    t.lr = 1e-3;
    t.refresh = RefreshPolicy::frozen(samplers);
    t.estimator = EstimatorConfig::naive();
    t.metrics_every = 500;
    let mut cfg = ExperimentConfig::new(
        &format!("many-vs-one-m{samplers}-k{particles}"),
        ill_conditioned_spec(),
        10,
        EncoderSpec::FullCov { hidden: vec![64, 64], jitter: 1e-4 },
        t,
    );
    cfg.seed = seed;
    cfg
}

pub fn gaussian_many_vs_one(seed: u64) -> Vec<ExperimentConfig> {
    vec![frozen_samplers(seed, 20, 64), frozen_samplers(seed, 1, 1280)]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathologyRow {
    pub proposal: String,
    pub mean: f64,
    pub se: f64,
    pub sd: f64,
    pub dropped: usize,
}

/// Peaked proposals `N(0, s²)` and the exact posterior, scored by the
/// surrogate objective at one simulated observation.
pub fn circular_pathology(seed: u64, particles: usize, replicates: usize) -> Result<(f64, Vec<PathologyRow>)> {
    let model = ConjugateGaussian1D::default();
    let mut rng = RngStream::new(seed, 0);
    let z = model.sample_prior(&mut rng);
    let x = model.simulate(&z, &mut rng);
    let root = RngStream::new(seed, 1);
    let mut rows = Vec::new();
    let (m, v) = model.posterior_mean_var(x[0]);
    let mut proposals: Vec<(String, GaussianDist)> = [1e-4, 1e-5, 1e-6, 1e-7]
        .iter()
        .map(|s| Ok((format!("N(0, {s:e}^2)"), GaussianDist::isotropic(DVector::zeros(1), *s)?)))
        .collect::<Result<_>>()?;
    proposals.push(("exact posterior".into(), GaussianDist::isotropic(DVector::from_element(1, m), v.sqrt())?));
    for (i, (name, q)) in proposals.iter().enumerate() {
        let e = surrogate_objective(q, &model, &x, particles, replicates, &root.derive(i as u64))?;
        rows.push(PathologyRow { proposal: name.clone(), mean: e.mean, se: e.se, sd: e.sd, dropped: e.dropped });
    }
    Ok((x[0], rows))
}

pub fn recipe_configs(name: &str, seed: u64) -> Result<Vec<ExperimentConfig>> {
    Ok(match name {
        "conjugate" => vec![conjugate(seed)],
        "two-moons" => two_moons(seed),
        "gaussian-pimh-vs-msc" => gaussian_pimh_vs_msc(seed),
        "gaussian-many-vs-one" => gaussian_many_vs_one(seed),
        "circular-pathology" => Vec::new(),
        other => return Err(Error::Config(format!("unknown recipe `{other}`"))),
    })
}

pub struct RecipeReport {
    pub summaries: Vec<RunSummary>,
    pub comparison: Option<Comparison>,
    pub out_dir: PathBuf,
}

/// Runs every configuration of a recipe under `out_root/<recipe>/<run>`
/// and, for multi-run recipes, writes `comparison.txt` and `comparison.json`.
pub fn run_recipe(name: &str, out_root: &Path, seed: u64) -> Result<RecipeReport> {
    let dir = out_root.join(name);
    fs::create_dir_all(&dir)?;
    if name == "circular-pathology" {
        let (x, rows) = circular_pathology(seed, 10_000, 200)?;
        let mut w = csv::Writer::from_path(dir.join("table.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        fs::write(dir.join("table.json"), serde_json::to_string_pretty(&serde_json::json!({ "x": x, "rows": rows }))?)?;
        return Ok(RecipeReport { summaries: Vec::new(), comparison: None, out_dir: dir });
    }
    let mut summaries = Vec::new();
    let mut files = Vec::new();
    for cfg in recipe_configs(name, seed)? {
        let out = dir.join(&cfg.name);
        let o = run_experiment(&cfg, &out)?;
        files.push(out.join(METRICS_FILE));
        summaries.push(o.summary);
    }
    let comparison = if files.len() > 1 {
        let c = compare_runs(&files)?;
        fs::write(dir.join("comparison.txt"), c.to_text())?;
        fs::write(dir.join("comparison.json"), c.to_json()?)?;
        Some(c)
    } else {
        None
    };
    Ok(RecipeReport { summaries, comparison, out_dir: dir })
}
