use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters flagged in `frozen` are left untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor<S>], grads: &[Tensor<S>], frozen: &[bool]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![S::zero(); p.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (S::c(c.beta1), S::c(c.beta2));
        let t = self.step as i32;
        let corr1 = S::one() - S::c(c.beta1.powi(t));
        let corr2 = S::one() - S::c(c.beta2.powi(t));
        let (lr, eps) = (S::c(c.learning_rate), S::c(c.eps));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for ((w, &gv), (mv, vv)) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut().zip(v.iter_mut())) {
                *mv = b1 * *mv + (S::one() - b1) * gv;
                *vv = b2 * *vv + (S::one() - b2) * gv * gv;
                let m_hat = *mv / corr1;
                let v_hat = *vv / corr2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_closed_form() {
        let mut p = Tensor::from_vec(vec![1], vec![0.0f64]).unwrap();
        let g = Tensor::from_vec(vec![1], vec![1.0]).unwrap();
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut [&mut p], &[g], &[false]);
        let expected = -1e-4 * 1.0 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-18);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::from_vec(vec![2], vec![0.7f64, -0.2]).unwrap();
        let g = Tensor::zeros(&[2]);
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            opt.step(&mut [&mut p], &[g.clone()], &[false]);
        }
        assert_eq!(p.data(), &[0.7, -0.2]);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut p = Tensor::from_vec(vec![2], vec![0.0f64, 0.0]).unwrap();
        let g = Tensor::from_vec(vec![2], vec![2.5, -0.3]).unwrap();
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..100 {
            opt.step(&mut [&mut p], &[g.clone()], &[false]);
        }
        assert!(p.data()[0] < 0.0 && p.data()[1] > 0.0);
    }

    #[test]
    fn frozen_parameters_are_bit_identical() {
        let mut a = Tensor::from_vec(vec![2], vec![0.1f64, 0.2]).unwrap();
        let mut b = Tensor::from_vec(vec![1], vec![0.3f64]).unwrap();
        let ga = Tensor::from_vec(vec![2], vec![1.0, 1.0]).unwrap();
        let gb = Tensor::from_vec(vec![1], vec![1.0]).unwrap();
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..10 {
            opt.step(&mut [&mut a, &mut b], &[ga.clone(), gb.clone()], &[true, false]);
        }
        assert_eq!(a.data(), &[0.1, 0.2]);
        assert_ne!(b.data(), &[0.3]);
    }
}
