use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn relu<S: Scalar>(x: &mut [S]) {
    x.iter_mut().for_each(|v| *v = v.max(S::zero()));
}

/// Zeroes gradient entries whose activation output was not positive.
pub fn relu_backward<S: Scalar>(activated: &[S], grad: &mut [S]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= S::zero() {
            *g = S::zero();
        }
    }
}

/// Softmax with max subtraction.
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let m = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `−ln p[label]`.
pub fn cross_entropy<S: Scalar>(probs: &[S], label: usize) -> Result<S> {
    let p = probs
        .get(label)
        .ok_or_else(|| Error::domain(format!("label {label} outside 0..{}", probs.len())))?;
    Ok(-p.max(S::min_positive_value()).ln())
}

/// Gradient of `−ln softmax(z)[label]` with respect to `z`: `p − onehot`.
pub fn softmax_cross_entropy_backward<S: Scalar>(probs: &[S], label: usize) -> Vec<S> {
    let mut g = probs.to_vec();
    g[label] = g[label] - S::one();
    g
}
