use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelSpec};
use crate::encoder::Encoder;
use crate::metrics::{amortized_kl_report, mc_forward_kl_report, KlReport, MetricsRow};
use crate::models::{simulate_dataset, GenerativeModel};
use crate::numkit::RngStream;
use crate::smc::DiagnosticsSink;
use crate::trainers::{train, Monitor, TrainOutput};
use crate::Result;

const DATA: u64 = 1;
const ENCODER: u64 = 2;
const REFERENCE: u64 = 3;
const PLOT: u64 = 4;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// The JSON run summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub method: String,
    pub seed: u64,
    pub model: ModelSpec,
    pub n: usize,
    pub steps_requested: usize,
    pub steps_done: usize,
    pub likelihood_evals: u64,
    pub skipped_gradients: usize,
    pub skipped_updates: usize,
    pub pimh_acceptance: Option<f64>,
    pub msc_move_rate: Option<f64>,
    pub final_metrics: Option<MetricsRow>,
    pub approximate_kl: bool,
    pub error: Option<String>,
}

impl RunSummary {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// A generated dataset with its latent draws.
pub struct Dataset {
    pub zs: Vec<DVector<f64>>,
    pub xs: Vec<DVector<f64>>,
}

pub fn generate_dataset(cfg: &ExperimentConfig, model: &dyn GenerativeModel) -> Dataset {
    let (zs, xs) = simulate_dataset(model, cfg.n, &mut RngStream::new(cfg.seed, DATA));
    Dataset { zs, xs }
}

pub fn initial_encoder(cfg: &ExperimentConfig, model: &dyn GenerativeModel) -> Result<Encoder> {
    cfg.encoder.build(model.obs_dim(), model.latent_dim(), &mut RngStream::new(cfg.seed, ENCODER))
}

/// Closed-form KL when the encoder is Gaussian and the model has an analytic
/// posterior, the reference-SMC estimate otherwise.
pub fn evaluate(
    cfg: &ExperimentConfig,
    model: &dyn GenerativeModel,
    xs: &[DVector<f64>],
    encoder: &Encoder,
    step: usize,
) -> Result<KlReport> {
    let analytic = matches!(encoder, Encoder::FullCov(_)) && model.analytic_posterior(&xs[0]).is_ok();
    if analytic {
        amortized_kl_report(encoder, model, xs, step)
    } else {
        let rng = RngStream::new(cfg.seed, REFERENCE);
        mc_forward_kl_report(encoder, model, xs, &cfg.evaluation.reference_smc(), &rng, step)
    }
}

/// Outcome of a run: the summary plus the training trace kept in memory.
pub struct RunOutcome {
    pub summary: RunSummary,
    pub rows: Vec<MetricsRow>,
    pub encoder: Encoder,
    pub dataset: Dataset,
    pub out_dir: PathBuf,
}

/// Trains once and writes metrics, summary, checkpoint, diagnostics and plot
/// data into `out`. Runtime failures keep the partial metrics and are
/// reported in the summary's `error` field rather than as `Err`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let model = cfg.model.build()?;
    let dataset = generate_dataset(cfg, model.as_ref());
    let mut encoder = initial_encoder(cfg, model.as_ref())?;
    let tcfg = cfg.trainer_config();
    fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;

    let xs = &dataset.xs;
    let approximate = std::sync::atomic::AtomicBool::new(false);
    let mut monitor = Monitor::new(tcfg.metrics_every).with_evaluator(|e, step| {
        let r = evaluate(cfg, model.as_ref(), xs, e, step)?;
        if r.approximate {
            approximate.store(true, std::sync::atomic::Ordering::Relaxed);
        }
        Ok(r)
    });
    if cfg.timing {
        monitor = monitor.with_timing();
    }
    if cfg.diagnostics {
        let path = out.join("diagnostics.jsonl");
        if path.exists() {
            fs::remove_file(&path)?;
        }
        monitor = monitor.with_diagnostics(DiagnosticsSink::append_to(path)?);
    }
    if cfg.checkpoint_every > 0 {
        monitor = monitor.with_checkpoints(out.join("checkpoints"), cfg.checkpoint_every);
    }

    let result = train(&tcfg, model.as_ref(), xs, &mut encoder, &mut monitor);
    let rows = std::mem::take(&mut monitor.rows);
    drop(monitor);
    write_metrics(out.join(METRICS_FILE), &rows)?;

    let (stats, error) = match result {
        Ok(o) => (o, None),
        Err(e) => {
            (TrainOutput { steps_done: rows.last().map_or(0, |r| r.step), ..Default::default() }, Some(e.to_string()))
        }
    };
    encoder.save(out.join("encoder"))?;
    write_samples(cfg, &encoder, &dataset, out)?;

    let summary = RunSummary {
        name: cfg.name.clone(),
        method: tcfg.method.label().into(),
        seed: cfg.seed,
        model: cfg.model.clone(),
        n: cfg.n,
        steps_requested: tcfg.steps,
        steps_done: stats.steps_done,
        likelihood_evals: stats.likelihood_evals,
        skipped_gradients: stats.skipped_gradients,
        skipped_updates: stats.skipped_updates,
        pimh_acceptance: (stats.pimh_proposed > 0).then(|| stats.pimh_accepted as f64 / stats.pimh_proposed as f64),
        msc_move_rate: (stats.msc_steps > 0).then(|| stats.msc_moves as f64 / stats.msc_steps as f64),
        final_metrics: rows.last().cloned(),
        approximate_kl: approximate.into_inner(),
        error,
    };
    fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(RunOutcome { summary, rows, encoder, dataset, out_dir: out.to_path_buf() })
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["step", "method", "fwd_kl", "rev_kl", "sym_kl", "mean_log_C", "mean_ess", "wall_ms"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
    Ok(rows)
}

/// `data.csv` (true latents and observations) and `samples.csv` (encoder
/// draws per datapoint) for scatter plots.
fn write_samples(cfg: &ExperimentConfig, encoder: &Encoder, data: &Dataset, out: &Path) -> Result<()> {
    let p = encoder.latent_dim();
    let d = data.xs[0].len();
    let mut f = std::io::BufWriter::new(fs::File::create(out.join("data.csv"))?);
    let mut header = vec!["datapoint".to_string()];
    header.extend((0..p).map(|i| format!("z{i}")));
    header.extend((0..d).map(|i| format!("x{i}")));
    writeln!(f, "{}", header.join(","))?;
    for (j, (z, x)) in data.zs.iter().zip(&data.xs).enumerate() {
        let vals: Vec<String> = z.iter().chain(x.iter()).map(|v| v.to_string()).collect();
        writeln!(f, "{j},{}", vals.join(","))?;
    }
    f.flush()?;

    let mut f = std::io::BufWriter::new(fs::File::create(out.join("samples.csv"))?);
    let mut header = vec!["datapoint".to_string(), "sample".to_string()];
    header.extend((0..p).map(|i| format!("z{i}")));
    writeln!(f, "{}", header.join(","))?;
    let rng = RngStream::new(cfg.seed, PLOT);
    for (j, x) in data.xs.iter().enumerate() {
        for (s, z) in encoder.sample(x, cfg.evaluation.plot_samples, &mut rng.derive(j as u64)).iter().enumerate() {
            let vals: Vec<String> = z.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{j},{s},{}", vals.join(","))?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Loads a config file, applies overrides and runs it.
pub fn run_config_file(path: impl AsRef<Path>, overrides: &super::Overrides) -> Result<RunOutcome> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(overrides);
    cfg.validate()?;
    let out = cfg.resolve_out_dir();
    run_experiment(&cfg, &out)
}
