//! Amortized variational inference under the inclusive KL divergence.
//!
//! The encoder `q(z | x)` is fit by stochastic gradient steps whose gradients
//! come from likelihood-tempered sequential Monte Carlo runs rather than from
//! importance samples proposed by the encoder itself. The crate also ships the
//! baselines (wake-phase reweighted wake-sleep, its defensive variant, Markovian
//! score climbing, the particle-independent Metropolis-Hastings variant) and the
//! analytic benchmark models used to check them.
//!
//! Layout:
//! - [`numkit`]: log-domain weights, resampling, ESS, Gaussians, seeded RNG streams.
//! - [`models`]: generative models with analytic posteriors where available.
//! - [`encoder`]: amortized conditional densities with hand-written backprop and Adam.
//! - [`smc`]: the likelihood-tempered SMC sampler and its evidence estimate.
//! - [`estimators`]: per-datapoint sampler stores and the three ratio gradient estimators.
//! - [`trainers`]: training loops and baselines.
//! - [`metrics`]: closed-form and Monte Carlo divergences.
//! - [`harness`]: configuration, experiment runner, recipes, comparison tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod encoder;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod numkit;
pub mod smc;
pub mod trainers;

pub use error::{Error, Result};
