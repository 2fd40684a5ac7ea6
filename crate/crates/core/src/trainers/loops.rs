use nalgebra::DVector;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::importance::{msc_step, rws_wake_grad, IsStats};
use super::{Method, Monitor, RefreshOrder, TrainerConfig};
use crate::encoder::{AdamState, Encoder};
use crate::estimators::{
    grad_estimate_a, grad_estimate_b, grad_estimate_c, grad_estimate_subsampled, SamplerStore, StoreMode, StoredRun,
};
use crate::models::GenerativeModel;
use crate::numkit::RngStream;
use crate::smc::{lt_smc_run, SmcRunRecord};
use crate::{Error, Result};

// stream tags
type WakeGrad = (Vec<f64>, IsStats);

const SMC: u64 = 1;
const APPEND: u64 = 2;
const BATCH: u64 = 3;
const REFRESH: u64 = 4;
const ESTIMATE: u64 = 5;
const IMPORTANCE: u64 = 6;
const ACCEPT: u64 = 7;
const CHAIN_INIT: u64 = 8;
const START: u64 = 9;

/// Counters gathered over a training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainOutput {
    pub steps_done: usize,
    pub likelihood_evals: u64,
    /// Per-datapoint gradients dropped after exhausting the retries.
    pub skipped_gradients: usize,
    /// Optimizer steps rejected for non-finite gradients or skipped entirely.
    pub skipped_updates: usize,
    pub pimh_accepted: usize,
    pub pimh_proposed: usize,
    pub msc_moves: usize,
    pub msc_steps: usize,
}

/// Current PIMH state of one datapoint: the accepted run and its `log Ĉ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PimhChainState {
    pub run: StoredRun,
    pub ess: f64,
}

impl PimhChainState {
    pub fn from_record(rec: &SmcRunRecord) -> Self {
        Self {
            run: StoredRun { atoms: rec.atoms.clone(), weights: rec.weights.clone(), log_c: rec.log_c },
            ess: rec.final_ess(),
        }
    }

    pub fn log_c(&self) -> f64 {
        self.run.log_c
    }

    /// `E_P̂[z]` under the current weighted particle set.
    pub fn mean(&self) -> DVector<f64> {
        let p = self.run.atoms[0].len();
        self.run.atoms.iter().zip(&self.run.weights).fold(DVector::zeros(p), |a, (z, w)| a + z * *w)
    }
}

/// Shared plumbing: RNG streams, minibatch and refresh selection, updates.
struct Ctx<'c> {
    cfg: &'c TrainerConfig,
    model: &'c dyn GenerativeModel,
    xs: &'c [DVector<f64>],
    root: RngStream,
    cursor: usize,
    adam: AdamState,
    out: TrainOutput,
}

impl<'c> Ctx<'c> {
    fn new(
        cfg: &'c TrainerConfig,
        model: &'c dyn GenerativeModel,
        xs: &'c [DVector<f64>],
        encoder: &Encoder,
    ) -> Result<Self> {
        cfg.validate()?;
        if xs.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let root = RngStream::new(cfg.seed, 0x5eed);
        let cursor = root.derive(START).random_range(0..xs.len());
        Ok(Self {
            cfg,
            model,
            xs,
            root,
            cursor,
            adam: AdamState::with_mode(encoder.num_params(), cfg.lr, cfg.optimizer),
            out: TrainOutput::default(),
        })
    }

    fn n(&self) -> usize {
        self.xs.len()
    }

    fn stream(&self, path: &[u64]) -> RngStream {
        self.root.derive_path(path)
    }

    fn minibatch(&self, step: usize) -> Vec<usize> {
        let (n, b) = (self.n(), self.cfg.batch_size(self.n()));
        if b == n {
            return (0..n).collect();
        }
        let mut v = index::sample(&mut self.stream(&[BATCH, step as u64]), n, b).into_vec();
        v.sort_unstable();
        v
    }

    fn refresh_set(&mut self, step: usize, batch: &[usize]) -> Vec<usize> {
        let p = self.cfg.refresh;
        if p.every == 0 || !step.is_multiple_of(p.every) {
            return Vec::new();
        }
        let n = self.n();
        let count = p.count.min(n);
        match p.order {
            RefreshOrder::Minibatch => batch.to_vec(),
            RefreshOrder::RoundRobin => {
                let v = (0..count).map(|i| (self.cursor + i) % n).collect();
                self.cursor = (self.cursor + count) % n;
                v
            }
            RefreshOrder::Random => {
                let mut v = index::sample(&mut self.stream(&[REFRESH, step as u64]), n, count).into_vec();
                v.sort_unstable();
                v
            }
        }
    }

    /// Runs LT-SMC for each `(datapoint, run index)` pair in parallel.
    fn run_smc(&self, jobs: &[(usize, usize)]) -> Result<Vec<SmcRunRecord>> {
        jobs.par_iter()
            .map(|&(j, m)| {
                lt_smc_run(self.model, &self.xs[j], &self.cfg.smc, &self.stream(&[SMC, j as u64, m as u64]))
                    .map_err(|e| Error::DatapointCollapse { datapoint: j, source: Box::new(e) })
            })
            .collect()
    }

    /// Averages the available gradients and takes one optimizer step.
    fn update(&mut self, encoder: &mut Encoder, grads: Vec<Option<Vec<f64>>>) {
        let ok: Vec<Vec<f64>> = grads.into_iter().flatten().collect();
        if ok.is_empty() {
            self.out.skipped_updates += 1;
            return;
        }
        let mut avg = vec![0.0; encoder.num_params()];
        for g in &ok {
            for (a, v) in avg.iter_mut().zip(g) {
                *a += v;
            }
        }
        let n = ok.len() as f64;
        avg.iter_mut().for_each(|a| *a /= n);
        if self.adam.step(encoder.params_mut(), &avg).is_err() {
            self.out.skipped_updates += 1;
        }
    }
}

fn mean_finite(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Dispatches on `cfg.method`, creating fresh stores or chains.
pub fn train(
    cfg: &TrainerConfig,
    model: &dyn GenerativeModel,
    xs: &[DVector<f64>],
    encoder: &mut Encoder,
    monitor: &mut Monitor<'_>,
) -> Result<TrainOutput> {
    match cfg.method {
        Method::SmcWakeA | Method::SmcWakeB | Method::SmcWakeC => {
            let mut stores = Vec::new();
            smc_wake_train(cfg, model, xs, encoder, &mut stores, monitor)
        }
        Method::SmcPimhWake => {
            let mut chains = Vec::new();
            smc_pimh_wake_train(cfg, model, xs, encoder, &mut chains, monitor)
        }
        Method::Rws | Method::DefensiveRws => rws_train(cfg, model, xs, encoder, monitor),
        Method::Msc => {
            let mut states = Vec::new();
            msc_train(cfg, model, xs, encoder, &mut states, monitor)
        }
    }
}

/// SMC-Wake. Missing or empty stores are filled with
/// `refresh.initial_runs` LT-SMC runs before the first gradient step.
pub fn smc_wake_train(
    cfg: &TrainerConfig,
    model: &dyn GenerativeModel,
    xs: &[DVector<f64>],
    encoder: &mut Encoder,
    stores: &mut Vec<SamplerStore>,
    monitor: &mut Monitor<'_>,
) -> Result<TrainOutput> {
    let mode =
        cfg.method.store_mode().ok_or_else(|| Error::Config(format!("{} is not an SMC-Wake method", cfg.method)))?;
    let mut ctx = Ctx::new(cfg, model, xs, encoder)?;
    let n = xs.len();
    if stores.len() != n {
        *stores = (0..n).map(|j| SamplerStore::with_window(j, mode, cfg.estimator.window)).collect();
    }
    if stores.iter().any(|s| s.mode() != mode) {
        return Err(Error::Config("store mode does not match the method".into()));
    }

    let init: Vec<(usize, usize)> =
        (0..n).flat_map(|j| (stores[j].run_count()..cfg.refresh.initial_runs).map(move |m| (j, m))).collect();
    append(&mut ctx, stores, monitor, &init, 0)?;

    let summary = |stores: &[SamplerStore]| {
        (
            mean_finite(stores.iter().filter_map(|s| s.latest_log_c())),
            mean_finite(stores.iter().map(|s| s.latest_ess())),
        )
    };
    let (lc, es) = summary(stores);
    monitor.record(0, cfg.method.label(), encoder, lc, es)?;

    for step in 1..=cfg.steps {
        let batch = ctx.minibatch(step);
        let refresh = ctx.refresh_set(step, &batch);
        let jobs: Vec<(usize, usize)> = refresh.iter().map(|&j| (j, stores[j].run_count())).collect();
        append(&mut ctx, stores, monitor, &jobs, step)?;

        let enc: &Encoder = encoder;
        let grads: Vec<Option<Vec<f64>>> = batch
            .par_iter()
            .map(|&j| {
                let s = &stores[j];
                let g = match mode {
                    StoreMode::A => match cfg.estimator.subsample(s.run_count()) {
                        Some(how) => grad_estimate_subsampled(
                            s,
                            enc,
                            &xs[j],
                            how,
                            &mut ctx.stream(&[ESTIMATE, step as u64, j as u64]),
                        ),
                        None => grad_estimate_a(s, enc, &xs[j]),
                    },
                    StoreMode::B => grad_estimate_b(s, enc, &xs[j]),
                    StoreMode::C => grad_estimate_c(s, enc, &xs[j]),
                };
                match g {
                    Ok(g) => Ok(Some(g.grad)),
                    Err(Error::NonFiniteGradient) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        ctx.out.skipped_gradients += grads.iter().filter(|g| g.is_none()).count();
        ctx.update(encoder, grads);
        ctx.out.steps_done = step;

        monitor.maybe_checkpoint(step, encoder, stores)?;
        if monitor.due(step, cfg.steps) {
            let (lc, es) = summary(stores);
            monitor.record(step, cfg.method.label(), encoder, lc, es)?;
        }
    }
    monitor.finish()?;
    Ok(ctx.out)
}

fn append(
    ctx: &mut Ctx,
    stores: &mut [SamplerStore],
    monitor: &mut Monitor<'_>,
    jobs: &[(usize, usize)],
    step: usize,
) -> Result<()> {
    let recs = ctx.run_smc(jobs)?;
    for (&(j, m), rec) in jobs.iter().zip(&recs) {
        ctx.out.likelihood_evals += rec.likelihood_evals as u64;
        stores[j].append(rec, &mut ctx.stream(&[APPEND, j as u64, m as u64]));
        monitor.log_run(step, j, m as u64, rec)?;
    }
    Ok(())
}

/// SMC-PIMH-Wake: each refreshed datapoint proposes a fresh LT-SMC run,
/// accepted with probability `min(1, Ĉ_new / Ĉ_j)`.
pub fn smc_pimh_wake_train(
    cfg: &TrainerConfig,
    model: &dyn GenerativeModel,
    xs: &[DVector<f64>],
    encoder: &mut Encoder,
    chains: &mut Vec<PimhChainState>,
    monitor: &mut Monitor<'_>,
) -> Result<TrainOutput> {
    let mut ctx = Ctx::new(cfg, model, xs, encoder)?;
    let n = xs.len();
    let mut runs = vec![1usize; n];
    if chains.len() != n {
        let jobs: Vec<(usize, usize)> = (0..n).map(|j| (j, 0)).collect();
        let recs = ctx.run_smc(&jobs)?;
        for (j, rec) in recs.iter().enumerate() {
            ctx.out.likelihood_evals += rec.likelihood_evals as u64;
            monitor.log_run(0, j, 0, rec)?;
        }
        *chains = recs.iter().map(PimhChainState::from_record).collect();
    }
    let summary =
        |c: &[PimhChainState]| (mean_finite(c.iter().map(|s| s.log_c())), mean_finite(c.iter().map(|s| s.ess)));
    let (lc, es) = summary(chains);
    monitor.record(0, cfg.method.label(), encoder, lc, es)?;

    for step in 1..=cfg.steps {
        let batch = ctx.minibatch(step);
        let refresh = ctx.refresh_set(step, &batch);
        let jobs: Vec<(usize, usize)> = refresh.iter().map(|&j| (j, runs[j])).collect();
        let recs = ctx.run_smc(&jobs)?;
        for (&(j, m), rec) in jobs.iter().zip(&recs) {
            ctx.out.likelihood_evals += rec.likelihood_evals as u64;
            monitor.log_run(step, j, m as u64, rec)?;
            runs[j] += 1;
            ctx.out.pimh_proposed += 1;
            let u: f64 = ctx.stream(&[ACCEPT, j as u64, m as u64]).random();
            if pimh_accept(chains[j].log_c(), rec.log_c, u) {
                chains[j] = PimhChainState::from_record(rec);
                ctx.out.pimh_accepted += 1;
            }
        }

        let enc: &Encoder = encoder;
        let grads: Vec<Option<Vec<f64>>> = batch
            .par_iter()
            .map(|&j| {
                let run = &chains[j].run;
                let coeffs: Vec<f64> = run.weights.iter().map(|w| -w).collect();
                let g = enc.score_grad(&xs[j], &run.atoms, &coeffs);
                g.iter().all(|v| v.is_finite()).then_some(g)
            })
            .collect();
        ctx.out.skipped_gradients += grads.iter().filter(|g| g.is_none()).count();
        ctx.update(encoder, grads);
        ctx.out.steps_done = step;

        monitor.maybe_checkpoint(step, encoder, &[])?;
        if monitor.due(step, cfg.steps) {
            let (lc, es) = summary(chains);
            monitor.record(step, cfg.method.label(), encoder, lc, es)?;
        }
    }
    monitor.finish()?;
    Ok(ctx.out)
}

/// PIMH acceptance `u < min(1, exp(new − old))`.
pub fn pimh_accept(log_c_old: f64, log_c_new: f64, u: f64) -> bool {
    log_c_new >= log_c_old || u.ln() < log_c_new - log_c_old
}

fn is_summary(stats: &[Option<IsStats>]) -> (f64, f64) {
    (mean_finite(stats.iter().flatten().map(|s| s.log_mean_weight)), mean_finite(stats.iter().flatten().map(|s| s.ess)))
}

/// Wake-phase training, plain or defensive. Undefined gradients are retried
/// `wake_retries` times and then skipped.
pub fn rws_train(
    cfg: &TrainerConfig,
    model: &dyn GenerativeModel,
    xs: &[DVector<f64>],
    encoder: &mut Encoder,
    monitor: &mut Monitor<'_>,
) -> Result<TrainOutput> {
    let defensive = match cfg.method {
        Method::Rws => false,
        Method::DefensiveRws => true,
        m => return Err(Error::Config(format!("{m} is not a wake-phase method"))),
    };
    let mut ctx = Ctx::new(cfg, model, xs, encoder)?;
    let k = cfg.is_k();
    let mut last: Vec<Option<IsStats>> = vec![None; xs.len()];
    let (lc, es) = is_summary(&last);
    monitor.record(0, cfg.method.label(), encoder, lc, es)?;

    for step in 1..=cfg.steps {
        let batch = ctx.minibatch(step);
        let enc: &Encoder = encoder;
        let results: Vec<(Option<WakeGrad>, usize)> = batch
            .par_iter()
            .map(|&j| {
                let mut attempts = 0;
                for a in 0..=cfg.wake_retries {
                    attempts += 1;
                    let mut r = ctx.stream(&[IMPORTANCE, step as u64, j as u64, a as u64]);
                    match rws_wake_grad(enc, model, &xs[j], k, defensive, &mut r) {
                        Ok((g, s)) => return Ok((Some((g.grad, s)), attempts)),
                        Err(Error::UndefinedGradient | Error::NonFiniteGradient) => continue,
                        Err(e) => return Err(e),
                    }
                }
                Ok((None, attempts))
            })
            .collect::<Result<_>>()?;
        let mut grads = Vec::with_capacity(batch.len());
        for (&j, (res, attempts)) in batch.iter().zip(results) {
            ctx.out.likelihood_evals += (attempts * k) as u64;
            match res {
                Some((g, s)) => {
                    last[j] = Some(s);
                    grads.push(Some(g));
                }
                None => {
                    ctx.out.skipped_gradients += 1;
                    grads.push(None);
                }
            }
        }
        ctx.update(encoder, grads);
        ctx.out.steps_done = step;

        monitor.maybe_checkpoint(step, encoder, &[])?;
        if monitor.due(step, cfg.steps) {
            let (lc, es) = is_summary(&last);
            monitor.record(step, cfg.method.label(), encoder, lc, es)?;
        }
    }
    monitor.finish()?;
    Ok(ctx.out)
}

/// Markovian score climbing. A datapoint's chain advances exactly when the
/// datapoint is in the minibatch; chains start from prior draws.
pub fn msc_train(
    cfg: &TrainerConfig,
    model: &dyn GenerativeModel,
    xs: &[DVector<f64>],
    encoder: &mut Encoder,
    states: &mut Vec<DVector<f64>>,
    monitor: &mut Monitor<'_>,
) -> Result<TrainOutput> {
    let mut ctx = Ctx::new(cfg, model, xs, encoder)?;
    let k = cfg.is_k();
    if states.len() != xs.len() {
        *states = (0..xs.len()).map(|j| model.sample_prior(&mut ctx.stream(&[CHAIN_INIT, j as u64]))).collect();
    }
    let mut last: Vec<Option<IsStats>> = vec![None; xs.len()];
    let (lc, es) = is_summary(&last);
    monitor.record(0, cfg.method.label(), encoder, lc, es)?;

    for step in 1..=cfg.steps {
        let batch = ctx.minibatch(step);
        let enc: &Encoder = encoder;
        let st: &Vec<DVector<f64>> = states;
        let results: Vec<(Option<super::MscStep>, usize)> = batch
            .par_iter()
            .map(|&j| {
                let mut attempts = 0;
                for a in 0..=cfg.wake_retries {
                    attempts += 1;
                    let mut r = ctx.stream(&[IMPORTANCE, step as u64, j as u64, a as u64]);
                    match msc_step(enc, model, &xs[j], &st[j], k, cfg.msc_weighted, &mut r) {
                        Ok(s) => return Ok((Some(s), attempts)),
                        Err(Error::UndefinedGradient | Error::NonFiniteGradient) => continue,
                        Err(e) => return Err(e),
                    }
                }
                Ok((None, attempts))
            })
            .collect::<Result<_>>()?;
        let mut grads = Vec::with_capacity(batch.len());
        for (&j, (res, attempts)) in batch.iter().zip(results) {
            ctx.out.likelihood_evals += (attempts * k) as u64;
            ctx.out.msc_steps += 1;
            match res {
                Some(s) => {
                    ctx.out.msc_moves += s.moved as usize;
                    states[j] = s.state;
                    last[j] = Some(s.stats);
                    grads.push(Some(s.estimate.grad));
                }
                None => {
                    ctx.out.skipped_gradients += 1;
                    grads.push(None);
                }
            }
        }
        ctx.update(encoder, grads);
        ctx.out.steps_done = step;

        monitor.maybe_checkpoint(step, encoder, &[])?;
        if monitor.due(step, cfg.steps) {
            let (lc, es) = is_summary(&last);
            monitor.record(step, cfg.method.label(), encoder, lc, es)?;
        }
    }
    monitor.finish()?;
    Ok(ctx.out)
}
