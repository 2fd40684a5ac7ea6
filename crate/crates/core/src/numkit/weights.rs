use crate::{Error, Result};

/// Unnormalized log-domain weights. Entries are finite or `-inf`, never NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct LogWeights(Vec<f64>);

impl LogWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("log-weights must be non-empty".into()));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidArgument("log-weights contain NaN or +inf".into()));
        }
        Ok(Self(values))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Probabilities summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedWeights(Vec<f64>);

impl NormalizedWeights {
    /// Checks nonnegativity and that the sum is within `1e-12` of one.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {s}, not 1")));
        }
        Ok(Self(values))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::EmptyMass);
    }
    if m.is_nan() || values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("log_sum_exp of NaN".into()));
    }
    if m == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    Ok(m + s.ln())
}

/// `log((1/n) sum exp(values))`.
pub fn log_mean_exp(values: &[f64]) -> Result<f64> {
    Ok(log_sum_exp(values)? - (values.len() as f64).ln())
}

/// Returns the normalized weights and `log(mean unnormalized weight)`.
pub fn normalize(lw: &LogWeights) -> Result<(NormalizedWeights, f64)> {
    let lse = log_sum_exp(lw.values())?;
    let mut w: Vec<f64> = lw.values().iter().map(|v| (v - lse).exp()).collect();
    // one renormalization pass trims the residual rounding so the sum is 1 to ~1 ulp
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    Ok((NormalizedWeights(w), lse - (lw.len() as f64).ln()))
}

pub fn ess(w: &NormalizedWeights) -> f64 {
    1.0 / w.values().iter().map(|x| x * x).sum::<f64>()
}
