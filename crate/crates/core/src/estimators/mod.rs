//! Per-datapoint sampler stores and the ratio gradient estimators built on them.

mod gradient;
mod snapshot;
mod store;

pub use gradient::{
    grad_estimate_a, grad_estimate_b, grad_estimate_c, grad_estimate_subsampled, subsample_records, GradientEstimate,
    Subsample,
};
pub use store::{store_append, RetainedAtom, SamplerStore, StoreMode, StoredRun};

#[cfg(test)]
mod tests;
