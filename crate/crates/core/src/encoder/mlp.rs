use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numkit::RngStream;
use crate::{Error, Result};

/// Dense network with ReLU hidden layers and a linear output layer.
///
/// Parameters live in one flat vector. Layer `l` maps `sizes[l]` inputs to
/// `sizes[l + 1]` outputs and stores its weight matrix row-major followed by
/// its bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    // activations[0] is the input; the last entry is the (linear) output
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("non-empty")
    }
}

impl MlpParams {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        let n = Self::param_count(&sizes);
        Ok(Self { sizes, params: vec![0.0; n] })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(sizes: Vec<usize>, rng: &mut RngStream) -> Result<Self> {
        let mut mlp = Self::zeros(sizes)?;
        for l in 0..mlp.num_layers() {
            let (w_off, _) = mlp.offsets(l);
            let (fan_in, fan_out) = (mlp.sizes[l], mlp.sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in &mut mlp.params[w_off..w_off + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(mlp)
    }

    pub fn from_flat(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        let mut mlp = Self::zeros(sizes)?;
        mlp.set_params(&params)?;
        Ok(mlp)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.params.len() {
            return Err(Error::DimensionMismatch { expected: self.params.len(), got: flat.len() });
        }
        self.params.copy_from_slice(flat);
        Ok(())
    }

    /// `(weight offset, bias offset)` of layer `l`.
    pub fn offsets(&self, l: usize) -> (usize, usize) {
        let w_off: usize = self.sizes.windows(2).take(l).map(|w| w[0] * w[1] + w[1]).sum();
        (w_off, w_off + self.sizes[l] * self.sizes[l + 1])
    }

    /// Mutable view of the output layer bias.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let (_, b_off) = self.offsets(self.num_layers() - 1);
        let n = self.output_dim();
        &mut self.params[b_off..b_off + n]
    }

    pub fn forward(&self, x: &[f64]) -> ForwardCache {
        assert_eq!(x.len(), self.input_dim(), "input dimension");
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(x.to_vec());
        for l in 0..self.num_layers() {
            let (w_off, b_off) = self.offsets(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = activations.last().expect("non-empty");
            let w = &self.params[w_off..w_off + n_in * n_out];
            let b = &self.params[b_off..b_off + n_out];
            let last = l + 1 == self.num_layers();
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let s = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    if last {
                        s
                    } else {
                        s.max(0.0)
                    }
                })
                .collect();
            activations.push(out);
        }
        ForwardCache { activations }
    }

    /// Adds `Jᵀ out_grad` (the parameter gradient of `out_grad · output`) into `grad`.
    pub fn backward(&self, cache: &ForwardCache, out_grad: &[f64], grad: &mut [f64]) {
        assert_eq!(out_grad.len(), self.output_dim());
        assert_eq!(grad.len(), self.params.len());
        let mut delta = out_grad.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (w_off, b_off) = self.offsets(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &cache.activations[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad[b_off + o] += d;
                let g = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
                g.iter_mut().zip(input).for_each(|(gi, xi)| *gi += d * xi);
            }
            if l == 0 {
                break;
            }
            let w = &self.params[w_off..w_off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]).for_each(|(p, wi)| *p += d * wi);
            }
            // ReLU derivative of the hidden layer that produced `input`
            prev.iter_mut().zip(input).for_each(|(p, a)| {
                if *a <= 0.0 {
                    *p = 0.0
                }
            });
            delta = prev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip_and_count() {
        let mut rng = RngStream::new(1, 0);
        let mlp = MlpParams::init(vec![3, 5, 4, 2], &mut rng).unwrap();
        assert_eq!(mlp.params().len(), 3 * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2);
        let back = MlpParams::from_flat(mlp.sizes().to_vec(), mlp.params().to_vec()).unwrap();
        assert_eq!(back, mlp);
        assert!(MlpParams::from_flat(vec![3, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn backward_matches_finite_differences() {
        let mut rng = RngStream::new(2, 0);
        let mut mlp = MlpParams::init(vec![3, 6, 6, 2], &mut rng).unwrap();
        // nonzero biases keep most ReLUs away from their kink
        for b in mlp.params_mut().iter_mut() {
            *b += 0.05;
        }
        let x = [0.3, -0.8, 1.1];
        let c = [0.7, -1.3];
        let f = |m: &MlpParams| {
            let out = m.forward(&x);
            out.output().iter().zip(c).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut grad = vec![0.0; mlp.params().len()];
        mlp.backward(&mlp.forward(&x), &c, &mut grad);
        let h = 1e-6;
        for i in 0..grad.len() {
            let mut p = mlp.clone();
            p.params_mut()[i] += h;
            let mut m = mlp.clone();
            m.params_mut()[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7 * (1.0 + fd.abs()), "{i}: {fd} {}", grad[i]);
        }
    }
}
