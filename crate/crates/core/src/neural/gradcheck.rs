//! Central finite-difference gradient verification.

use crate::scalar::Scalar;

/// Denominator floor for relative errors, so that gradients near zero are
/// compared on an absolute scale.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Numerical gradient of `f` at `x` with step `h`.
pub fn central_difference<S: Scalar>(x: &[S], h: f64, mut f: impl FnMut(&[S]) -> S) -> Vec<S> {
    let h = S::c(h);
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (h + h)
        })
        .collect()
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error<S: Scalar>(analytic: S, numeric: S) -> f64 {
    let (a, n) = (analytic.as_f64(), numeric.as_f64());
    (a - n).abs() / a.abs().max(n.abs()).max(GRADCHECK_FLOOR)
}

pub fn max_relative_error<S: Scalar>(analytic: &[S], numeric: &[S]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
