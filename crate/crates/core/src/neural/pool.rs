use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pooled values plus the winning frame per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool<S> {
    pub values: Vec<S>,
    pub argmax: Vec<usize>,
}

/// Per-channel max over frames `t < length` of a `channels × stride` map.
/// Frames at or beyond `length` never win, whatever they contain.
pub fn global_max_pool<S: Scalar>(x: &[S], channels: usize, stride: usize, length: usize) -> Result<MaxPool<S>> {
    if length == 0 {
        return Err(Error::domain("cannot pool over zero frames"));
    }
    if length > stride || x.len() != channels * stride {
        return Err(Error::dims("pooling input", channels * stride, x.len()));
    }
    let mut values = Vec::with_capacity(channels);
    let mut argmax = Vec::with_capacity(channels);
    for c in 0..channels {
        let row = &x[c * stride..c * stride + length];
        let mut best = 0;
        for (t, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = t;
            }
        }
        values.push(row[best]);
        argmax.push(best);
    }
    Ok(MaxPool { values, argmax })
}

/// Routes each channel's gradient to its winning frame.
pub fn global_max_pool_backward<S: Scalar>(pool: &MaxPool<S>, grad: &[S], stride: usize) -> Vec<S> {
    let mut gx = vec![S::zero(); pool.argmax.len() * stride];
    for (c, (&t, &g)) in pool.argmax.iter().zip(grad).enumerate() {
        gx[c * stride + t] = g;
    }
    gx
}
