//! Seedable numerical primitives shared by every other module.
//!
//! All weight arithmetic happens in the log domain; weights are exponentiated
//! only when normalized.

mod gaussian;
mod resample;
mod rng;
mod weights;

pub use gaussian::{mvn_logpdf, mvn_sample, GaussianDist};
pub use resample::{resample, ResampleScheme};
pub use rng::RngStream;
pub use weights::{ess, log_mean_exp, log_sum_exp, normalize, LogWeights, NormalizedWeights};

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One standard-normal draw.
pub fn std_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
}
