use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::student_t_two_sided_p;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    /// `None` when the differences have zero spread and a nonzero mean.
    pub t_statistic: Option<f64>,
    pub degrees_of_freedom: usize,
    pub p_value_two_sided: f64,
    pub n_pairs: usize,
    pub mean_difference: f64,
    /// Set when every difference is identical, so the statistic is not
    /// defined by the usual formula.
    pub degenerate: bool,
}

/// Two-sided paired t-test on `a − b`.
///
/// Identical differences are reported as degenerate: zero differences give
/// `t = 0, p = 1`, a constant nonzero shift gives no statistic and `p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::dims("paired samples", a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::domain("paired t-test needs at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("paired t-test input".into()));
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    let df = n - 1;
    let constant = d.iter().all(|&v| v == d[0]);
    if constant {
        let zero = d[0] == 0.0;
        return Ok(TTestResult {
            t_statistic: zero.then_some(0.0),
            degrees_of_freedom: df,
            p_value_two_sided: if zero { 1.0 } else { 0.0 },
            n_pairs: n,
            mean_difference: mean,
            degenerate: true,
        });
    }
    let t = mean / (var.sqrt() / nf.sqrt());
    Ok(TTestResult {
        t_statistic: Some(t),
        degrees_of_freedom: df,
        p_value_two_sided: student_t_two_sided_p(t, df as f64).clamp(0.0, 1.0),
        n_pairs: n,
        mean_difference: mean,
        degenerate: false,
    })
}
