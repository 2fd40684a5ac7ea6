use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerMode {
    #[default]
    Adam,
    Sgd,
}

/// Adaptive-moment optimizer state aligned with a flat parameter vector.
/// In SGD mode the moments are unused and the update is `φ − η g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub mode: OptimizerMode,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        Self::with_mode(n, lr, OptimizerMode::Adam)
    }

    pub fn sgd(n: usize, lr: f64) -> Self {
        Self::with_mode(n, lr, OptimizerMode::Sgd)
    }

    pub fn with_mode(n: usize, lr: f64, mode: OptimizerMode) -> Self {
        Self { mode, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Descent step on `params` along `grad`. Non-finite gradients leave
    /// both the parameters and the state untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::DimensionMismatch { expected: self.m.len(), got: params.len() });
        }
        if grad.len() != params.len() {
            return Err(Error::DimensionMismatch { expected: params.len(), got: grad.len() });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        self.t += 1;
        match self.mode {
            OptimizerMode::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerMode::Adam => {
                let t = self.t as i32;
                let c1 = 1.0 - self.beta1.powi(t);
                let c2 = 1.0 - self.beta2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0, 0.5];
        let orig = p.clone();
        let mut s = AdamState::new(3, 0.1);
        for _ in 0..5 {
            s.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, orig);
        assert_eq!(s.step_count(), 5);
    }

    #[test]
    fn sgd_is_literal_update() {
        let mut p = vec![1.0, 2.0];
        let mut s = AdamState::sgd(2, 0.25);
        s.step(&mut p, &[4.0, -8.0]).unwrap();
        assert_eq!(p, vec![0.0, 4.0]);
    }

    #[test]
    fn constant_gradient_step_tends_to_learning_rate() {
        // with constant g the bias-corrected moments are exactly g and g², so
        // every step is lr·g/(|g| + eps)
        let lr = 1e-3;
        let g = 0.37;
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, lr);
        let mut prev = 0.0;
        for _ in 0..2000 {
            s.step(&mut p, &[g]).unwrap();
            let step = prev - p[0];
            prev = p[0];
            let expected = lr * g / (g + s.eps);
            assert!((step - expected).abs() < 1e-12, "{step} vs {expected}");
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = vec![1.0, 1.0];
        let mut s = AdamState::new(2, 0.1);
        assert!(matches!(s.step(&mut p, &[1.0, f64::NAN]), Err(Error::NonFiniteGradient)));
        assert!(matches!(s.step(&mut p, &[f64::INFINITY, 0.0]), Err(Error::NonFiniteGradient)));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(s.step_count(), 0);
    }
}
