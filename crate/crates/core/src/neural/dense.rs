use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{kaiming_bound, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully-connected layer `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Dense<S> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> Dense<S> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        if in_dim < 1 || out_dim < 1 {
            return Err(Error::domain("dense layer dimensions must be positive"));
        }
        let bound = kaiming_bound(in_dim);
        let w = (0..in_dim * out_dim).map(|_| S::c(rng.random_range(-bound..bound))).collect();
        Ok(Dense {
            in_dim,
            out_dim,
            weight: Tensor::from_vec(vec![out_dim, in_dim], w)?,
            bias: Tensor::zeros(&[out_dim]),
        })
    }

    pub fn forward(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.in_dim {
            return Err(Error::dims("dense input", self.in_dim, x.len()));
        }
        let w = self.weight.data();
        Ok(self
            .bias
            .data()
            .iter()
            .enumerate()
            .map(|(o, &b)| {
                b + w[o * self.in_dim..(o + 1) * self.in_dim]
                    .iter()
                    .zip(x)
                    .map(|(&a, &v)| a * v)
                    .sum::<S>()
            })
            .collect())
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, x: &[S], grad_out: &[S], grad_w: &mut Tensor<S>, grad_b: &mut Tensor<S>) -> Vec<S> {
        let w = self.weight.data();
        let gw = grad_w.data_mut();
        let mut gx = vec![S::zero(); self.in_dim];
        for (o, &g) in grad_out.iter().enumerate() {
            grad_b.data_mut()[o] = grad_b.data()[o] + g;
            let row = o * self.in_dim..(o + 1) * self.in_dim;
            for ((dw, &xv), (gxv, &wv)) in gw[row.clone()].iter_mut().zip(x).zip(gx.iter_mut().zip(&w[row])) {
                *dw = *dw + g * xv;
                *gxv = *gxv + g * wv;
            }
        }
        gx
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}
