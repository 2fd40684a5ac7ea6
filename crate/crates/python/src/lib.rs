//! Python bindings: models, LT-SMC runs, encoders and the experiment harness.
//! Vectors cross the boundary as lists of floats.

use std::path::PathBuf;

use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use ::smcwake::encoder::{Encoder as CoreEncoder, EncoderSpec};
use ::smcwake::harness::{self, recipes, ExperimentConfig as CoreConfig, ModelSpec};
use ::smcwake::models::{DesignSpec, GenerativeModel};
use ::smcwake::numkit::RngStream;
use ::smcwake::smc::{self, MutationConfig, SmcConfig, SmcRunRecord, TemperSchedule};

fn err(e: ::smcwake::Error) -> PyErr {
    match e {
        ::smcwake::Error::Config(_)
        | ::smcwake::Error::InvalidArgument(_)
        | ::smcwake::Error::DimensionMismatch { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn vec_in(v: Vec<f64>, dim: usize) -> PyResult<DVector<f64>> {
    if v.len() != dim {
        return Err(PyValueError::new_err(format!("expected a vector of length {dim}, got {}", v.len())));
    }
    Ok(DVector::from_vec(v))
}

fn vec_out(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn json_value<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

type MeanCov = (Vec<f64>, Vec<Vec<f64>>);

/// A generative model `p(z) p(x | z)`.
#[pyclass(module = "smcwake", frozen)]
struct Model {
    spec: ModelSpec,
    inner: Box<dyn GenerativeModel>,
}

impl Model {
    fn from_spec(spec: ModelSpec) -> PyResult<Self> {
        let inner = spec.build().map_err(err)?;
        Ok(Self { spec, inner })
    }
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (prior_std = 10.0, noise_std = 1.0))]
    fn conjugate(prior_std: f64, noise_std: f64) -> PyResult<Self> {
        Self::from_spec(ModelSpec::Conjugate { prior_std, noise_std })
    }

    /// Linear Gaussian model with a random design drawn from `seed`.
    #[staticmethod]
    #[pyo3(signature = (latent_dim, obs_dim, prior_std = 1.0, noise_std = 1.0, seed = 0))]
    fn gaussian_linear(latent_dim: usize, obs_dim: usize, prior_std: f64, noise_std: f64, seed: u64) -> PyResult<Self> {
        Self::from_spec(ModelSpec::GaussianLinear {
            latent_dim,
            obs_dim,
            prior_std,
            noise_std,
            design: DesignSpec::Random,
            seed,
        })
    }

    #[staticmethod]
    fn two_moons() -> PyResult<Self> {
        Self::from_spec(ModelSpec::TwoMoons)
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    fn sample_prior(&self, seed: u64) -> Vec<f64> {
        vec_out(&self.inner.sample_prior(&mut RngStream::new(seed, 0)))
    }

    fn simulate(&self, z: Vec<f64>, seed: u64) -> PyResult<Vec<f64>> {
        let z = vec_in(z, self.inner.latent_dim())?;
        Ok(vec_out(&self.inner.simulate(&z, &mut RngStream::new(seed, 0))))
    }

    fn prior_logpdf(&self, z: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.prior_logpdf(&vec_in(z, self.inner.latent_dim())?))
    }

    fn log_lik(&self, x: Vec<f64>, z: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.log_lik(&vec_in(x, self.inner.obs_dim())?, &vec_in(z, self.inner.latent_dim())?))
    }

    fn log_joint(&self, x: Vec<f64>, z: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.log_joint(&vec_in(x, self.inner.obs_dim())?, &vec_in(z, self.inner.latent_dim())?))
    }

    /// `(mean, covariance)` of `p(z | x)`, or `None` when it has no closed form.
    fn analytic_posterior(&self, x: Vec<f64>) -> PyResult<Option<MeanCov>> {
        let x = vec_in(x, self.inner.obs_dim())?;
        Ok(self.inner.analytic_posterior(&x).ok().map(|g| {
            let cov = g.covariance();
            (vec_out(g.mean()), cov.row_iter().map(|r| r.iter().copied().collect()).collect())
        }))
    }

    fn analytic_log_evidence(&self, x: Vec<f64>) -> PyResult<Option<f64>> {
        Ok(self.inner.analytic_log_evidence(&vec_in(x, self.inner.obs_dim())?).ok())
    }

    fn __repr__(&self) -> String {
        format!("Model({:?})", self.spec)
    }
}

/// Final weighted particle set of one LT-SMC run.
#[pyclass(module = "smcwake", frozen)]
struct SmcRun(SmcRunRecord);

#[pymethods]
impl SmcRun {
    #[getter]
    fn atoms(&self) -> Vec<Vec<f64>> {
        self.0.atoms.iter().map(vec_out).collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights.clone()
    }

    #[getter]
    fn log_c(&self) -> f64 {
        self.0.log_c
    }

    #[getter]
    fn temperatures(&self) -> Vec<f64> {
        self.0.temperatures.clone()
    }

    #[getter]
    fn ess_trace(&self) -> Vec<f64> {
        self.0.ess_trace.clone()
    }

    #[getter]
    fn likelihood_evals(&self) -> usize {
        self.0.likelihood_evals
    }

    fn weighted_mean(&self) -> Vec<f64> {
        vec_out(&self.0.weighted_mean())
    }

    fn __repr__(&self) -> String {
        format!(
            "SmcRun(particles={}, stages={}, log_c={})",
            self.0.particles(),
            self.0.temperatures.len(),
            self.0.log_c
        )
    }
}

/// Runs likelihood-tempered SMC on `p(z | x)`. `stages` selects a linear
/// schedule with that many temperatures; otherwise the schedule is adaptive.
#[pyfunction]
#[pyo3(signature = (model, x, particles, seed, stages = None, ess_fraction = 0.5, mh_steps = 5, step_std = 0.1f64.sqrt()))]
#[allow(clippy::too_many_arguments)]
fn lt_smc(
    py: Python<'_>,
    model: &Model,
    x: Vec<f64>,
    particles: usize,
    seed: u64,
    stages: Option<usize>,
    ess_fraction: f64,
    mh_steps: usize,
    step_std: f64,
) -> PyResult<SmcRun> {
    let x = vec_in(x, model.inner.obs_dim())?;
    let schedule = match stages {
        Some(n) => TemperSchedule::linear(n).map_err(err)?,
        None => TemperSchedule::adaptive(ess_fraction),
    };
    let cfg = SmcConfig::new(particles, schedule, MutationConfig::new(mh_steps, step_std));
    cfg.validate().map_err(err)?;
    let rec = py.detach(|| smc::lt_smc_run(model.inner.as_ref(), &x, &cfg, &RngStream::new(seed, 0))).map_err(err)?;
    Ok(SmcRun(rec))
}

/// Amortized conditional density `q(z | x)`.
#[pyclass(module = "smcwake")]
struct Encoder(CoreEncoder);

#[pymethods]
impl Encoder {
    #[staticmethod]
    #[pyo3(signature = (obs_dim, latent_dim, hidden = vec![64, 64], seed = 0, jitter = 1e-4))]
    fn full_cov(obs_dim: usize, latent_dim: usize, hidden: Vec<usize>, seed: u64, jitter: f64) -> PyResult<Self> {
        let spec = EncoderSpec::FullCov { hidden, jitter };
        Ok(Self(spec.build(obs_dim, latent_dim, &mut RngStream::new(seed, 0)).map_err(err)?))
    }

    #[staticmethod]
    #[pyo3(signature = (obs_dim, latent_dim, hidden = vec![64, 64], components = 8, seed = 0))]
    fn mixture(obs_dim: usize, latent_dim: usize, hidden: Vec<usize>, components: usize, seed: u64) -> PyResult<Self> {
        let spec = EncoderSpec::Mixture { hidden, components };
        Ok(Self(spec.build(obs_dim, latent_dim, &mut RngStream::new(seed, 0)).map_err(err)?))
    }

    /// Loads `<stem>.bin` and `<stem>.json` as written by the harness.
    #[staticmethod]
    fn load(stem: PathBuf) -> PyResult<Self> {
        Ok(Self(CoreEncoder::load(stem).map_err(err)?))
    }

    fn save(&self, stem: PathBuf) -> PyResult<()> {
        self.0.save(stem).map_err(err)?;
        Ok(())
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.0.family()
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.0.num_params()
    }

    #[getter]
    fn params(&self) -> Vec<f64> {
        self.0.params().to_vec()
    }

    #[setter]
    fn set_params(&mut self, flat: Vec<f64>) -> PyResult<()> {
        self.0.set_params(&flat).map_err(err)
    }

    fn log_prob(&self, x: Vec<f64>, z: Vec<f64>) -> PyResult<f64> {
        Ok(self.0.log_prob(&vec_in(x, self.0.obs_dim())?, &vec_in(z, self.0.latent_dim())?))
    }

    fn sample(&self, x: Vec<f64>, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let x = vec_in(x, self.0.obs_dim())?;
        Ok(self.0.sample(&x, n, &mut RngStream::new(seed, 0)).iter().map(vec_out).collect())
    }

    fn mean(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(vec_out(&self.0.mean(&vec_in(x, self.0.obs_dim())?)))
    }

    fn __repr__(&self) -> String {
        format!("Encoder(family={:?}, params={})", self.0.family(), self.0.num_params())
    }
}

/// Experiment configuration, read from and written to TOML.
#[pyclass(module = "smcwake", skip_from_py_object)]
#[derive(Clone)]
struct ExperimentConfig(CoreConfig);

#[pymethods]
impl ExperimentConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self(CoreConfig::from_toml_str(text).map_err(err)?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self(CoreConfig::load(path).map_err(err)?))
    }

    fn to_toml(&self) -> PyResult<String> {
        self.0.to_toml_string().map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.0.seed = seed;
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.trainer.steps
    }

    #[setter]
    fn set_steps(&mut self, steps: usize) {
        self.0.trainer.steps = steps;
    }

    fn __repr__(&self) -> String {
        format!("ExperimentConfig(name={:?}, seed={})", self.0.name, self.0.seed)
    }
}

/// Runs one experiment into `out_dir` and returns `(summary, encoder)`.
/// Training failures are reported in `summary["error"]` rather than raised.
#[pyfunction]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &ExperimentConfig,
    out_dir: PathBuf,
) -> PyResult<(Bound<'py, PyAny>, Encoder)> {
    let cfg = config.0.clone();
    let outcome = py.detach(|| harness::run_experiment(&cfg, &out_dir)).map_err(err)?;
    Ok((json_value(py, &outcome.summary)?, Encoder(outcome.encoder)))
}

#[pyfunction]
fn recipe_names() -> Vec<&'static str> {
    recipes::RECIPES.iter().map(|r| r.name).collect()
}

#[pyfunction]
#[pyo3(signature = (name, seed = 0))]
fn recipe_configs(name: &str, seed: u64) -> PyResult<Vec<ExperimentConfig>> {
    Ok(recipes::recipe_configs(name, seed).map_err(err)?.into_iter().map(ExperimentConfig).collect())
}

/// Compares finished runs given their `metrics.csv` paths; returns the table as a dict.
#[pyfunction]
fn compare_runs<'py>(py: Python<'py>, paths: Vec<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let c = harness::compare_runs(&paths).map_err(err)?;
    py.import("json")?.call_method1("loads", (c.to_json().map_err(err)?,))
}

#[pymodule]
#[pyo3(name = "smcwake")]
fn smcwake_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<SmcRun>()?;
    m.add_class::<Encoder>()?;
    m.add_class::<ExperimentConfig>()?;
    m.add_function(wrap_pyfunction!(lt_smc, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(recipe_names, m)?)?;
    m.add_function(wrap_pyfunction!(recipe_configs, m)?)?;
    m.add_function(wrap_pyfunction!(compare_runs, m)?)?;
    Ok(())
}
