//! Likelihood-tempered sequential Monte Carlo.

mod diagnostics;
mod mutation;
mod sampler;
mod schedule;

pub use diagnostics::{DiagnosticsSink, RunDiagnostics};
pub use mutation::{mh_mutation_sweep, tempered_log_target, MutationConfig, MutationTarget};
pub use sampler::{
    conditional_ess, lt_smc_run, solve_next_temperature, ParticleSystem, SmcConfig, SmcRunRecord, DEFAULT_MAX_STAGES,
};
pub use schedule::TemperSchedule;
