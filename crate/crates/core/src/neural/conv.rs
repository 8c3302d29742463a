use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{kaiming_bound, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Same-length dilated 1-D convolution.
///
/// `y[o][t] = bias[o] + Σ_{c,j} w[o][c][j] · x[c][t + (j − ⌊k/2⌋)·dilation]`,
/// with out-of-range input frames read as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DilatedConv1d<S> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    /// `out × in × kernel`
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> DilatedConv1d<S> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if kernel_size < 1 || dilation < 1 || in_channels < 1 || out_channels < 1 {
            return Err(Error::domain("convolution sizes and dilation must be at least 1"));
        }
        let bound = kaiming_bound(in_channels * kernel_size);
        let n = out_channels * in_channels * kernel_size;
        let w = (0..n).map(|_| S::c(rng.random_range(-bound..bound))).collect();
        Ok(DilatedConv1d {
            in_channels,
            out_channels,
            kernel_size,
            dilation,
            weight: Tensor::from_vec(vec![out_channels, in_channels, kernel_size], w)?,
            bias: Tensor::zeros(&[out_channels]),
        })
    }

    #[inline]
    fn offset(&self, j: usize) -> isize {
        (j as isize - (self.kernel_size / 2) as isize) * self.dilation as isize
    }

    /// Output frames `t` for which `t + off` lies in `[0, len)`.
    #[inline]
    fn valid_range(off: isize, len: usize) -> (usize, usize) {
        let lo = (-off).max(0) as usize;
        let hi = (len as isize - off).clamp(0, len as isize) as usize;
        (lo.min(hi), hi)
    }

    /// Forward pass over an `in × len` input, producing `out × len`.
    pub fn forward(&self, x: &[S], len: usize) -> Result<Vec<S>> {
        if len == 0 {
            return Err(Error::domain("convolution input has no frames"));
        }
        if x.len() != self.in_channels * len {
            return Err(Error::dims("convolution input", self.in_channels * len, x.len()));
        }
        let (k, w, b) = (self.kernel_size, self.weight.data(), self.bias.data());
        let mut y = vec![S::zero(); self.out_channels * len];
        for o in 0..self.out_channels {
            let yo = &mut y[o * len..(o + 1) * len];
            yo.iter_mut().for_each(|v| *v = b[o]);
            for c in 0..self.in_channels {
                let xc = &x[c * len..(c + 1) * len];
                for j in 0..k {
                    let wv = w[(o * self.in_channels + c) * k + j];
                    let off = self.offset(j);
                    let (lo, hi) = Self::valid_range(off, len);
                    if lo >= hi {
                        continue;
                    }
                    let src = &xc[(lo as isize + off) as usize..(hi as isize + off) as usize];
                    for (yv, &xv) in yo[lo..hi].iter_mut().zip(src) {
                        *yv = *yv + wv * xv;
                    }
                }
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grad_w`/`grad_b` and returns the
    /// input gradient when `want_input_grad` is set.
    pub fn backward(
        &self,
        x: &[S],
        len: usize,
        grad_out: &[S],
        grad_w: &mut Tensor<S>,
        grad_b: &mut Tensor<S>,
        want_input_grad: bool,
    ) -> Option<Vec<S>> {
        let k = self.kernel_size;
        let w = self.weight.data();
        let mut gx = want_input_grad.then(|| vec![S::zero(); self.in_channels * len]);
        let gw = grad_w.data_mut();
        for o in 0..self.out_channels {
            let go = &grad_out[o * len..(o + 1) * len];
            grad_b.data_mut()[o] = grad_b.data()[o] + go.iter().copied().sum::<S>();
            for c in 0..self.in_channels {
                let xc = &x[c * len..(c + 1) * len];
                for j in 0..k {
                    let off = self.offset(j);
                    let (lo, hi) = Self::valid_range(off, len);
                    if lo >= hi {
                        continue;
                    }
                    let s0 = (lo as isize + off) as usize;
                    let s1 = (hi as isize + off) as usize;
                    let idx = (o * self.in_channels + c) * k + j;
                    let acc: S = go[lo..hi].iter().zip(&xc[s0..s1]).map(|(&g, &xv)| g * xv).sum();
                    gw[idx] = gw[idx] + acc;
                    if let Some(gx) = gx.as_mut() {
                        let wv = w[idx];
                        let gxc = &mut gx[c * len..(c + 1) * len];
                        for (dst, &g) in gxc[s0..s1].iter_mut().zip(&go[lo..hi]) {
                            *dst = *dst + wv * g;
                        }
                    }
                }
            }
        }
        gx
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{central_difference, max_relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution with explicit bounds checks.
    fn conv_oracle(layer: &DilatedConv1d<f64>, x: &[f64], len: usize) -> Vec<f64> {
        let (ci, co, k, d) = (layer.in_channels, layer.out_channels, layer.kernel_size, layer.dilation);
        let w = layer.weight.data();
        let mut y = vec![0.0; co * len];
        for o in 0..co {
            for t in 0..len {
                let mut acc = layer.bias.data()[o];
                for c in 0..ci {
                    for j in 0..k {
                        let src = t as i64 + (j as i64 - (k / 2) as i64) * d as i64;
                        if src >= 0 && (src as usize) < len {
                            acc += w[(o * ci + c) * k + j] * x[c * len + src as usize];
                        }
                    }
                }
                y[o * len + t] = acc;
            }
        }
        y
    }

    #[test]
    fn identity_kernel_copies_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = DilatedConv1d::<f64>::new(3, 3, 1, 1, &mut rng).unwrap();
        let w = layer.weight.data_mut();
        w.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        let x: Vec<f64> = (0..15).map(|i| i as f64 * 0.3 - 1.0).collect();
        assert_eq!(layer.forward(&x, 5).unwrap(), x);
    }

    #[test]
    fn zero_input_yields_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = DilatedConv1d::<f64>::new(2, 3, 3, 2, &mut rng).unwrap();
        layer.bias = Tensor::from_vec(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = layer.forward(&[0.0; 8], 4).unwrap();
        assert_eq!(y, vec![0.5, 0.5, 0.5, 0.5, -1.0, -1.0, -1.0, -1.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(k, d) in &[(3, 2), (8, 2), (4, 3), (1, 1), (5, 4)] {
            let mut layer = DilatedConv1d::<f64>::new(2, 3, k, d, &mut rng).unwrap();
            layer.bias.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
            let x: Vec<f64> = (0..14).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = layer.forward(&x, 7).unwrap();
            let want = conv_oracle(&layer, &x, 7);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = DilatedConv1d::<f64>::new(2, 3, 3, 1, &mut rng).unwrap();
        assert!(layer.forward(&[0.0; 9], 4).is_err());
        assert!(DilatedConv1d::<f64>::new(2, 3, 0, 1, &mut rng).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = DilatedConv1d::<f64>::new(2, 3, 3, 2, &mut rng).unwrap();
        let len = 6;
        let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let coef: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |l: &DilatedConv1d<f64>, x: &[f64]| -> f64 {
            l.forward(x, len).unwrap().iter().zip(&coef).map(|(a, b)| a * b).sum()
        };
        let mut gw = Tensor::zeros(layer.weight.shape());
        let mut gb = Tensor::zeros(layer.bias.shape());
        let gx = layer.backward(&x, len, &coef, &mut gw, &mut gb, true).unwrap();

        let num_x = central_difference(&x, 1e-4, |xp| loss(&layer, xp));
        assert!(max_relative_error(&gx, &num_x) < 1e-6);
        let num_w = central_difference(layer.weight.data(), 1e-4, |wp| {
            let mut l = layer.clone();
            l.weight.data_mut().copy_from_slice(wp);
            loss(&l, &x)
        });
        assert!(max_relative_error(gw.data(), &num_w) < 1e-6);
    }

    #[test]
    fn parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(DilatedConv1d::<f32>::new(40, 128, 8, 2, &mut rng).unwrap().param_count(), 41_088);
    }
}
