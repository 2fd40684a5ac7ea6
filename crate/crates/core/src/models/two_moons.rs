use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::GenerativeModel;
use crate::numkit::{RngStream, LN_2PI};

const RADIUS_MEAN: f64 = 0.1;
const RADIUS_STD: f64 = 0.01;
const OFFSET: f64 = 0.25;

/// The two-moons simulator: `z ~ U(-1, 1)²`, `a ~ U(-π/2, π/2)`,
/// `r ~ N(0.1, 0.01²)`, `x = (r cos a + 0.25, r sin a) + g(z)`.
///
/// The likelihood is the polar change of variables of `(a, r)`:
/// `p(x | z) = N(ρ; 0.1, 0.01²) / (π ρ)` where `ρ = |x − g(z) − (0.25, 0)|`,
/// zero when the recovered angle falls outside `(-π/2, π/2)`. The `r < 0`
/// branch carries less than 1e-23 of the mass and is ignored.
#[derive(Clone, Copy, Debug, Default)]
pub struct TwoMoonsModel;

impl TwoMoonsModel {
    /// `g(z) = (-|z₁ + z₂| / √2, (-z₁ + z₂) / √2)`.
    pub fn shift(z: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![-(z[0] + z[1]).abs() * FRAC_1_SQRT_2, (-z[0] + z[1]) * FRAC_1_SQRT_2])
    }

    /// The forward map with the auxiliary draws supplied.
    pub fn simulate_with(z: &DVector<f64>, angle: f64, radius: f64) -> DVector<f64> {
        let p = DVector::from_vec(vec![radius * angle.cos() + OFFSET, radius * angle.sin()]);
        p + Self::shift(z)
    }
}

impl GenerativeModel for TwoMoonsModel {
    fn name(&self) -> &'static str {
        "two-moons"
    }

    fn latent_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn sample_prior(&self, rng: &mut RngStream) -> DVector<f64> {
        DVector::from_vec(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
    }

    fn prior_logpdf(&self, z: &DVector<f64>) -> f64 {
        if z.iter().all(|v| (-1.0..=1.0).contains(v)) {
            -(4.0f64.ln())
        } else {
            f64::NEG_INFINITY
        }
    }

    fn log_lik(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let g = Self::shift(z);
        let u1 = x[0] - g[0] - OFFSET;
        let u2 = x[1] - g[1];
        if !(u1 > 0.0) {
            return f64::NEG_INFINITY;
        }
        let rho = u1.hypot(u2);
        let r = (rho - RADIUS_MEAN) / RADIUS_STD;
        -PI.ln() - 0.5 * (LN_2PI + r * r) - RADIUS_STD.ln() - rho.ln()
    }

    fn simulate(&self, z: &DVector<f64>, rng: &mut RngStream) -> DVector<f64> {
        let angle = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
        let radius = Normal::new(RADIUS_MEAN, RADIUS_STD).unwrap().sample(rng);
        Self::simulate_with(z, angle, radius)
    }
}
