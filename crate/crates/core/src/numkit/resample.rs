use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NormalizedWeights, RngStream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleScheme {
    /// One uniform draw, stratified positions.
    #[default]
    Systematic,
    /// Independent categorical draws.
    Multinomial,
}

/// Draws `k_out` ancestor indices (0-based) in proportion to `w`.
pub fn resample(w: &NormalizedWeights, k_out: usize, scheme: ResampleScheme, rng: &mut RngStream) -> Vec<usize> {
    let cum: Vec<f64> = w
        .values()
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let last_positive = w.values().iter().rposition(|x| *x > 0.0).unwrap_or(0);
    let total = *cum.last().unwrap_or(&1.0);
    let pick = |u: f64| -> usize {
        let u = u * total;
        cum.partition_point(|c| *c <= u).min(last_positive)
    };
    match scheme {
        ResampleScheme::Multinomial => (0..k_out).map(|_| pick(rng.random::<f64>())).collect(),
        ResampleScheme::Systematic => {
            let u0: f64 = rng.random::<f64>();
            let step = 1.0 / k_out as f64;
            let mut out = Vec::with_capacity(k_out);
            let mut j = 0usize;
            for i in 0..k_out {
                let u = ((i as f64 + u0) * step) * total;
                while j < last_positive && cum[j] <= u {
                    j += 1;
                }
                out.push(j);
            }
            out
        }
    }
}
