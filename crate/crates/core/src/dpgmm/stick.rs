use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct StickWeights<S> {
    pub weights: Vec<S>,
    /// Mass left on the stick after the last break.
    pub residual: S,
}

/// `π_1 = β_1`, `π_k = β_k ∏_{i<k} (1 − β_i)`.
pub fn stick_weights<S: Scalar>(fractions: &[S]) -> Result<StickWeights<S>> {
    let mut remaining = S::one();
    let mut weights = Vec::with_capacity(fractions.len());
    for &b in fractions {
        if !(b > S::zero() && b < S::one()) {
            return Err(Error::domain(format!("stick fraction {b} outside (0, 1)")));
        }
        weights.push(b * remaining);
        remaining = remaining * (S::one() - b);
    }
    Ok(StickWeights {
        weights,
        residual: remaining,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn halves() {
        let s = stick_weights(&[0.5f64, 0.5]).unwrap();
        assert_eq!(s.weights, vec![0.5, 0.25]);
        assert_eq!(s.residual, 0.25);
    }

    #[test]
    fn nearly_whole_stick() {
        let s = stick_weights(&[1.0f64 - 1e-12]).unwrap();
        assert!((s.weights[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn rejects_fractions_outside_open_interval() {
        assert!(stick_weights(&[0.0f64]).is_err());
        assert!(stick_weights(&[0.3f64, 1.0]).is_err());
        assert!(stick_weights(&[f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn mass_is_conserved(betas in proptest::collection::vec(1e-6f64..(1.0 - 1e-6), 1..30)) {
            let s = stick_weights(&betas).unwrap();
            let total: f64 = s.weights.iter().sum::<f64>() + s.residual;
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
