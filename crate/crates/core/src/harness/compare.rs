use std::fmt::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{read_metrics, RunSummary, SUMMARY_FILE};
use crate::metrics::MetricsRow;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparedRun {
    pub path: PathBuf,
    pub method: String,
    pub final_step: usize,
}

/// One divergence across all runs, with the indices attaining the minimum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub values: Vec<f64>,
    pub minimum: Vec<usize>,
    pub tie: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub runs: Vec<ComparedRun>,
    pub rows: Vec<ComparisonRow>,
}

fn summary_next_to(path: &Path) -> Option<RunSummary> {
    let dir = path.parent()?;
    RunSummary::load(dir.join(SUMMARY_FILE)).ok()
}

fn best(rows: &[MetricsRow], f: impl Fn(&MetricsRow) -> f64) -> f64 {
    rows.iter().map(f).filter(|v| !v.is_nan()).fold(f64::NAN, f64::min)
}

fn row(metric: &str, values: Vec<f64>) -> ComparisonRow {
    let min = values.iter().copied().filter(|v| !v.is_nan()).fold(f64::NAN, f64::min);
    let minimum: Vec<usize> = if min.is_nan() {
        Vec::new()
    } else {
        values.iter().enumerate().filter(|(_, v)| **v == min).map(|(i, _)| i).collect()
    };
    ComparisonRow { metric: metric.into(), tie: minimum.len() > 1, minimum, values }
}

/// Aligns final-step and best-step divergences of several metrics files.
/// Files whose neighbouring `summary.json` names a different model are refused.
pub fn compare_runs(paths: &[PathBuf]) -> Result<Comparison> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    }
    let mut model = None;
    let mut runs = Vec::new();
    let mut traces = Vec::new();
    for p in paths {
        let rows = read_metrics(p)?;
        let last = rows.last().ok_or_else(|| Error::Format(format!("{}: no metrics rows", p.display())))?;
        if let Some(s) = summary_next_to(p) {
            match &model {
                None => model = Some(s.model),
                Some(m) if *m != s.model => {
                    return Err(Error::Config(format!("{} was produced by a different model", p.display())))
                }
                Some(_) => {}
            }
        }
        runs.push(ComparedRun { path: p.clone(), method: last.method.clone(), final_step: last.step });
        traces.push(rows);
    }
    let last = |f: fn(&MetricsRow) -> f64| traces.iter().map(|t| f(t.last().expect("non-empty"))).collect();
    let rows = vec![
        row("final fwd_kl", last(|r| r.fwd_kl)),
        row("final rev_kl", last(|r| r.rev_kl)),
        row("final sym_kl", last(|r| r.sym_kl)),
        row("best fwd_kl", traces.iter().map(|t| best(t, |r| r.fwd_kl)).collect()),
        row("best rev_kl", traces.iter().map(|t| best(t, |r| r.rev_kl)).collect()),
        row("best sym_kl", traces.iter().map(|t| best(t, |r| r.sym_kl)).collect()),
    ];
    Ok(Comparison { runs, rows })
}

impl Comparison {
    /// Plain-text table; `*` marks the row minimum, `=` a tied minimum.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<14}", "metric");
        for (i, r) in self.runs.iter().enumerate() {
            let _ = write!(s, " {:>18}", format!("[{i}] {}", r.method));
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{:<14}", row.metric);
            for (i, v) in row.values.iter().enumerate() {
                let mark = if !row.minimum.contains(&i) {
                    ' '
                } else if row.tie {
                    '='
                } else {
                    '*'
                };
                let _ = write!(s, " {:>17.6}{mark}", v);
            }
            s.push('\n');
        }
        for (i, r) in self.runs.iter().enumerate() {
            let _ = writeln!(s, "[{i}] {} (step {})", r.path.display(), r.final_step);
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
