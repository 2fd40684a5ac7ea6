//! Training loops: SMC-Wake, SMC-PIMH-Wake and the wake-phase and MSC
//! baselines, plus the surrogate objective behind the circular pathology.

mod config;
mod importance;
mod loops;
mod monitor;
mod surrogate;

pub use config::{EstimatorConfig, Method, RefreshOrder, RefreshPolicy, TrainerConfig};
pub use importance::{msc_step, rws_wake_grad, IsStats, MscStep};
pub use loops::{
    msc_train, pimh_accept, rws_train, smc_pimh_wake_train, smc_wake_train, train, PimhChainState, TrainOutput,
};
pub use monitor::Monitor;
pub use surrogate::{surrogate_objective, EncoderAt, Proposal, SurrogateEstimate, UniformBox};
