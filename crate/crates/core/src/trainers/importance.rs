use nalgebra::DVector;
use rand::Rng;

use crate::encoder::Encoder;
use crate::estimators::GradientEstimate;
use crate::models::GenerativeModel;
use crate::numkit::{ess, log_add_exp, normalize, resample, LogWeights, NormalizedWeights, ResampleScheme, RngStream};
use crate::{Error, Result};

/// Summary of one self-normalized importance-sampling batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsStats {
    /// Log of the mean unnormalized weight, an evidence estimate.
    pub log_mean_weight: f64,
    pub ess: f64,
}

/// Normalized weights from log-weights, or `UndefinedGradient` when every
/// particle has zero joint density.
fn snis(log_w: Vec<f64>) -> Result<(NormalizedWeights, IsStats)> {
    let lw = LogWeights::new(log_w).map_err(|_| Error::UndefinedGradient)?;
    let (w, log_mean_weight) = normalize(&lw).map_err(|_| Error::UndefinedGradient)?;
    let stats = IsStats { log_mean_weight, ess: ess(&w) };
    Ok((w, stats))
}

/// Wake-phase gradient `−Σ_i w^i ∇_φ log q_φ(z^i | x)` with `z^i` drawn from
/// `q_φ`, or from `½ p(z) + ½ q_φ(z|x)` when `defensive` is set.
pub fn rws_wake_grad(
    encoder: &Encoder,
    model: &dyn GenerativeModel,
    x: &DVector<f64>,
    k: usize,
    defensive: bool,
    rng: &mut RngStream,
) -> Result<(GradientEstimate, IsStats)> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one particle".into()));
    }
    let from_prior = if defensive { (0..k).filter(|_| rng.random::<bool>()).count() } else { 0 };
    let mut zs = encoder.sample(x, k - from_prior, rng);
    zs.extend((0..from_prior).map(|_| model.sample_prior(rng)));
    let log_q = encoder.log_probs(x, &zs);
    let log_w: Vec<f64> = zs
        .iter()
        .zip(&log_q)
        .map(|(z, lq)| {
            let joint = model.log_joint(x, z);
            if joint == f64::NEG_INFINITY {
                return joint;
            }
            let proposal =
                if defensive { log_add_exp(model.prior_logpdf(z), *lq) - std::f64::consts::LN_2 } else { *lq };
            joint - proposal
        })
        .collect();
    let (w, stats) = snis(log_w)?;
    let coeffs: Vec<f64> = w.values().iter().map(|v| -v).collect();
    let label = if defensive { "defensive-rws" } else { "rws" };
    Ok((GradientEstimate::new(encoder.score_grad(x, &zs, &coeffs), label, 1, 0.0)?, stats))
}

/// Result of one conditional-importance-sampling transition.
#[derive(Clone, Debug)]
pub struct MscStep {
    pub state: DVector<f64>,
    pub estimate: GradientEstimate,
    /// Whether the chain left its previous state.
    pub moved: bool,
    pub stats: IsStats,
}

/// CIS kernel with `q_φ` as proposal: the current state is kept as particle
/// 0, `K − 1` fresh draws come from `q_φ(·|x)`, and the new state is drawn in
/// proportion to `p(z, x) / q_φ(z|x)`. The gradient is `−∇_φ log q_φ` at the
/// new state, or the weighted sum over all particles when `weighted` is set.
pub fn msc_step(
    encoder: &Encoder,
    model: &dyn GenerativeModel,
    x: &DVector<f64>,
    state: &DVector<f64>,
    k: usize,
    weighted: bool,
    rng: &mut RngStream,
) -> Result<MscStep> {
    let k = k.max(1);
    let mut zs = vec![state.clone()];
    zs.extend(encoder.sample(x, k - 1, rng));
    let log_q = encoder.log_probs(x, &zs);
    let log_w: Vec<f64> = zs
        .iter()
        .zip(&log_q)
        .map(|(z, lq)| {
            let joint = model.log_joint(x, z);
            if joint == f64::NEG_INFINITY {
                joint
            } else {
                joint - lq
            }
        })
        .collect();
    let (w, stats) = snis(log_w)?;
    let pick = resample(&w, 1, ResampleScheme::Multinomial, rng)[0];
    let grad = if weighted {
        let coeffs: Vec<f64> = w.values().iter().map(|v| -v).collect();
        encoder.score_grad(x, &zs, &coeffs)
    } else {
        encoder.score_grad(x, &zs[pick..pick + 1], &[-1.0])
    };
    Ok(MscStep {
        moved: pick != 0 && zs[pick] != zs[0],
        state: zs.swap_remove(pick),
        estimate: GradientEstimate::new(grad, "msc", 1, 0.0)?,
        stats,
    })
}
