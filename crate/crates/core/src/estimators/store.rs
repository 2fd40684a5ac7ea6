use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::numkit::{log_add_exp, resample, ResampleScheme, RngStream};
use crate::smc::SmcRunRecord;

/// Memory regime of a sampler store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreMode {
    /// Every run's full particle set, O(M K).
    A,
    /// One atom drawn from each run, O(M).
    B,
    /// Only the latest run (or the latest `L`), O(K).
    C,
}

impl StoreMode {
    pub fn label(self) -> &'static str {
        match self {
            StoreMode::A => "A",
            StoreMode::B => "B",
            StoreMode::C => "C",
        }
    }
}

/// Final weighted particle set of one run together with its `log Ĉ`.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredRun {
    pub atoms: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub log_c: f64,
}

/// A single atom drawn from a run's final particle set.
#[derive(Clone, Debug, PartialEq)]
pub struct RetainedAtom {
    pub z: DVector<f64>,
    pub log_c: f64,
}

/// Per-datapoint archive of LT-SMC runs.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerStore {
    pub(crate) datapoint: usize,
    pub(crate) mode: StoreMode,
    pub(crate) window: usize,
    pub(crate) records: VecDeque<StoredRun>,
    pub(crate) retained: Vec<RetainedAtom>,
    pub(crate) log_c_sum: f64,
    pub(crate) count: usize,
    pub(crate) last_ess: f64,
}

impl SamplerStore {
    pub fn new(datapoint: usize, mode: StoreMode) -> Self {
        Self::with_window(datapoint, mode, 1)
    }

    /// Mode C keeps the latest `window` records; other modes ignore it.
    pub fn with_window(datapoint: usize, mode: StoreMode, window: usize) -> Self {
        Self {
            datapoint,
            mode,
            window: window.max(1),
            records: VecDeque::new(),
            retained: Vec::new(),
            log_c_sum: f64::NEG_INFINITY,
            count: 0,
            last_ess: f64::NAN,
        }
    }

    pub fn datapoint(&self) -> usize {
        self.datapoint
    }

    pub fn mode(&self) -> StoreMode {
        self.mode
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Number of runs appended so far, `M_j`.
    pub fn run_count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// `log((1/M) Σ_m Ĉ_m)`, maintained by streaming log-sum-exp.
    pub fn log_mean_c(&self) -> f64 {
        self.log_c_sum - (self.count as f64).ln()
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &StoredRun> {
        self.records.iter()
    }

    pub fn retained(&self) -> &[RetainedAtom] {
        &self.retained
    }

    pub fn latest(&self) -> Option<&StoredRun> {
        self.records.back()
    }

    /// `log Ĉ` of the most recent run.
    pub fn latest_log_c(&self) -> Option<f64> {
        self.records.back().map(|r| r.log_c).or_else(|| self.retained.last().map(|a| a.log_c))
    }

    /// Final-stage ESS of the most recent run.
    pub fn latest_ess(&self) -> f64 {
        self.last_ess
    }

    /// Floats currently held, for memory accounting.
    pub fn stored_floats(&self) -> usize {
        let recs: usize =
            self.records.iter().map(|r| r.atoms.iter().map(|a| a.len()).sum::<usize>() + r.weights.len() + 1).sum();
        let atoms: usize = self.retained.iter().map(|a| a.z.len() + 1).sum();
        recs + atoms
    }

    /// Adds a run. Modes A and B draw one atom from `Cat(z, w)` using `rng`.
    pub fn append(&mut self, record: &SmcRunRecord, rng: &mut RngStream) {
        self.count += 1;
        self.log_c_sum = log_add_exp(self.log_c_sum, record.log_c);
        self.last_ess = record.final_ess();
        if matches!(self.mode, StoreMode::A | StoreMode::B) {
            let i = resample(&record.normalized_weights(), 1, ResampleScheme::Multinomial, rng)[0];
            self.retained.push(RetainedAtom { z: record.atoms[i].clone(), log_c: record.log_c });
        }
        let run = || StoredRun { atoms: record.atoms.clone(), weights: record.weights.clone(), log_c: record.log_c };
        match self.mode {
            StoreMode::A => self.records.push_back(run()),
            StoreMode::B => {}
            StoreMode::C => {
                self.records.push_back(run());
                while self.records.len() > self.window {
                    self.records.pop_front();
                }
            }
        }
    }
}

/// `store_append` as a free function.
pub fn store_append(store: &mut SamplerStore, record: &SmcRunRecord, rng: &mut RngStream) {
    store.append(record, rng);
}
