use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::Serialize;

use super::SmcRunRecord;
use crate::Result;

/// One JSON-lines entry per LT-SMC run.
#[derive(Debug, Serialize)]
pub struct RunDiagnostics<'a> {
    pub step: usize,
    pub datapoint: usize,
    pub run: u64,
    pub log_c: f64,
    pub stages: usize,
    pub temperatures: &'a [f64],
    pub ess: &'a [f64],
    pub resamples: usize,
    pub acceptance_rate: f64,
    pub capped: bool,
}

impl<'a> RunDiagnostics<'a> {
    pub fn new(step: usize, datapoint: usize, run: u64, rec: &'a SmcRunRecord) -> Self {
        Self {
            step,
            datapoint,
            run,
            log_c: rec.log_c,
            stages: rec.temperatures.len() - 1,
            temperatures: &rec.temperatures,
            ess: &rec.ess_trace,
            resamples: rec.resample_count,
            acceptance_rate: rec.acceptance_rate,
            capped: rec.capped,
        }
    }
}

/// Appends diagnostics records to a file, one JSON object per line.
#[derive(Debug)]
pub struct DiagnosticsSink {
    out: Mutex<BufWriter<File>>,
}

impl DiagnosticsSink {
    pub fn append_to(path: impl AsRef<Path>) -> Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { out: Mutex::new(BufWriter::new(f)) })
    }

    pub fn write(&self, d: &RunDiagnostics<'_>) -> Result<()> {
        let line = serde_json::to_string(d)?;
        let mut out = self.out.lock().expect("diagnostics writer poisoned");
        writeln!(out, "{line}")?;
        Ok(())
    }

    pub fn flush(&self) -> Result<()> {
        self.out.lock().expect("diagnostics writer poisoned").flush()?;
        Ok(())
    }
}
