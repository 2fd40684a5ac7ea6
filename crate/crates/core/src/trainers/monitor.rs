use std::path::PathBuf;
use std::time::Instant;

use crate::encoder::Encoder;
use crate::estimators::SamplerStore;
use crate::metrics::{KlReport, MetricsRow};
use crate::smc::{DiagnosticsSink, RunDiagnostics, SmcRunRecord};
use crate::Result;

type Evaluator<'a> = Box<dyn Fn(&Encoder, usize) -> Result<KlReport> + Sync + 'a>;

/// Collects metrics rows, diagnostics and checkpoints while a trainer runs.
/// Rows survive a failed run, so partial traces remain available.
pub struct Monitor<'a> {
    evaluate: Option<Evaluator<'a>>,
    pub every: usize,
    pub rows: Vec<MetricsRow>,
    pub last_report: Option<KlReport>,
    start: Option<Instant>,
    diagnostics: Option<DiagnosticsSink>,
    checkpoint: Option<(PathBuf, usize)>,
}

impl<'a> Default for Monitor<'a> {
    fn default() -> Self {
        Self::new(100)
    }
}

impl<'a> Monitor<'a> {
    pub fn new(every: usize) -> Self {
        Self {
            evaluate: None,
            every,
            rows: Vec::new(),
            last_report: None,
            start: None,
            diagnostics: None,
            checkpoint: None,
        }
    }

    pub fn with_evaluator(mut self, f: impl Fn(&Encoder, usize) -> Result<KlReport> + Sync + 'a) -> Self {
        self.evaluate = Some(Box::new(f));
        self
    }

    /// Records elapsed wall-clock time in each row; otherwise `wall_ms` is 0.
    pub fn with_timing(mut self) -> Self {
        self.start = Some(Instant::now());
        self
    }

    pub fn with_diagnostics(mut self, sink: DiagnosticsSink) -> Self {
        self.diagnostics = Some(sink);
        self
    }

    /// Writes encoder (and store) checkpoints into `dir` every `every` steps.
    pub fn with_checkpoints(mut self, dir: PathBuf, every: usize) -> Self {
        self.checkpoint = Some((dir, every));
        self
    }

    pub(crate) fn due(&self, step: usize, last: usize) -> bool {
        step == 0 || step == last || (self.every > 0 && step.is_multiple_of(self.every))
    }

    pub(crate) fn record(
        &mut self,
        step: usize,
        method: &str,
        encoder: &Encoder,
        mean_log_c: f64,
        mean_ess: f64,
    ) -> Result<()> {
        let (fwd, rev, sym) = match &self.evaluate {
            Some(f) => {
                let r = f(encoder, step)?;
                let v = (r.avg_forward, r.avg_reverse, r.avg_symmetric);
                self.last_report = Some(r);
                v
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        let wall_ms = self.start.map_or(0, |s| s.elapsed().as_millis() as u64);
        self.rows.push(MetricsRow {
            step,
            method: method.to_string(),
            fwd_kl: fwd,
            rev_kl: rev,
            sym_kl: sym,
            mean_log_c,
            mean_ess,
            wall_ms,
        });
        Ok(())
    }

    pub(crate) fn log_run(&self, step: usize, datapoint: usize, run: u64, rec: &SmcRunRecord) -> Result<()> {
        if let Some(sink) = &self.diagnostics {
            sink.write(&RunDiagnostics::new(step, datapoint, run, rec))?;
        }
        Ok(())
    }

    pub(crate) fn maybe_checkpoint(&self, step: usize, encoder: &Encoder, stores: &[SamplerStore]) -> Result<()> {
        let Some((dir, every)) = &self.checkpoint else { return Ok(()) };
        if *every == 0 || !step.is_multiple_of(*every) || step == 0 {
            return Ok(());
        }
        std::fs::create_dir_all(dir)?;
        encoder.save(dir.join(format!("encoder-{step:08}")))?;
        for s in stores {
            let path = dir.join(format!("store-{step:08}-{:05}.bin", s.datapoint()));
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            s.write_snapshot(&mut f)?;
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if let Some(sink) = &self.diagnostics {
            sink.flush()?;
        }
        Ok(())
    }
}
