//! Prior distribution of the number of occupied components under a DP.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest `n` for which Stirling numbers are computed exactly (25! < 2^128).
pub const STIRLING_MAX_N: usize = 25;

fn stirling_row(n: usize) -> Vec<u128> {
    // row[k] = z(m, k); z(m+1, k) = m·z(m, k) + z(m, k−1)
    let mut row = vec![1u128];
    for m in 0..n {
        let mut next = vec![0u128; m + 2];
        for k in 0..=m + 1 {
            let stay = if k <= m { (m as u128) * row[k] } else { 0 };
            let new_table = if k >= 1 { row[k - 1] } else { 0 };
            next[k] = stay + new_table;
        }
        row = next;
    }
    row
}

/// Unsigned Stirling number of the first kind `z(n, k)`.
pub fn stirling_unsigned(n: usize, k: usize) -> Result<u128> {
    if n > STIRLING_MAX_N {
        return Err(Error::Range(format!("stirling numbers are exact only for n <= {STIRLING_MAX_N}")));
    }
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds n = {n}")));
    }
    Ok(stirling_row(n)[k])
}

/// `p(k | α0, n) ∝ z(n, k) α0^k` for `k = 1..=n`, normalized explicitly.
/// Entry `i` holds `p(k = i + 1)`.
pub fn component_count_pmf<S: Scalar>(n: usize, alpha0: S) -> Result<Vec<S>> {
    if n < 1 || n > STIRLING_MAX_N {
        return Err(Error::Range(format!("n must be in 1..={STIRLING_MAX_N}, got {n}")));
    }
    if !(alpha0 > S::zero()) {
        return Err(Error::domain("alpha0 must be positive"));
    }
    let row = stirling_row(n);
    // log-space terms keep α0^k in range for large α0
    let logs: Vec<S> = (1..=n)
        .map(|k| S::c((row[k] as f64).ln()) + S::from_usize_lossy(k) * alpha0.ln())
        .collect();
    let norm = crate::scalar::log_sum_exp(&logs);
    Ok(logs.into_iter().map(|l| (l - norm).exp()).collect())
}

/// `(α0 Σ_{i=1..n} 1/(α0 + i − 1), α0 ln((n + α0)/α0))`.
pub fn expected_components<S: Scalar>(n: usize, alpha0: S) -> (S, S) {
    let exact = alpha0
        * (1..=n)
            .map(|i| (alpha0 + S::from_usize_lossy(i - 1)).recip())
            .sum::<S>();
    let approx = alpha0 * ((S::from_usize_lossy(n) + alpha0) / alpha0).ln();
    (exact, approx)
}

/// Empirical distribution of the number of tables after seating `n`
/// customers by the Chinese restaurant process, over `n_samples` runs.
/// Entry `i` holds the frequency of `k = i + 1`.
pub fn crp_simulate(n: usize, alpha0: f64, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    if n < 1 || n_samples < 1 || !(alpha0 > 0.0) {
        return Err(Error::domain("need n >= 1, n_samples >= 1 and alpha0 > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; n];
    for _ in 0..n_samples {
        let mut tables = 1usize;
        for seated in 1..n {
            // new table with probability α0 / (seated + α0)
            if rng.random::<f64>() * (seated as f64 + alpha0) < alpha0 {
                tables += 1;
            }
        }
        counts[tables - 1] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / n_samples as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stirling_small_values() {
        assert_eq!(stirling_unsigned(3, 2).unwrap(), 3);
        assert_eq!(stirling_unsigned(0, 0).unwrap(), 1);
        assert_eq!(stirling_unsigned(4, 0).unwrap(), 0);
        for n in 0..=STIRLING_MAX_N {
            assert_eq!(stirling_unsigned(n, n).unwrap(), 1);
        }
        assert!(stirling_unsigned(26, 3).is_err());
        assert!(stirling_unsigned(3, 4).is_err());
    }

    /// Brute force: count permutations of `n` by number of cycles.
    fn cycles_brute_force(n: usize) -> Vec<u128> {
        fn permute(perm: &mut Vec<usize>, i: usize, out: &mut Vec<u128>) {
            if i == perm.len() {
                let mut seen = vec![false; perm.len()];
                let mut cycles = 0;
                for s in 0..perm.len() {
                    if !seen[s] {
                        cycles += 1;
                        let mut j = s;
                        while !seen[j] {
                            seen[j] = true;
                            j = perm[j];
                        }
                    }
                }
                out[cycles] += 1;
                return;
            }
            for j in i..perm.len() {
                perm.swap(i, j);
                permute(perm, i + 1, out);
                perm.swap(i, j);
            }
        }
        let mut out = vec![0u128; n + 1];
        permute(&mut (0..n).collect(), 0, &mut out);
        out
    }

    #[test]
    fn stirling_counts_permutations_by_cycles() {
        let mut fact = 1u128;
        for n in 1..=8 {
            fact *= n as u128;
            let brute = cycles_brute_force(n);
            for k in 0..=n {
                assert_eq!(stirling_unsigned(n, k).unwrap(), brute[k], "n={n} k={k}");
            }
            assert_eq!(brute.iter().sum::<u128>(), fact);
        }
        let mut fact = 1u128;
        for n in 1..=10usize {
            fact *= n as u128;
            let total: u128 = (0..=n).map(|k| stirling_unsigned(n, k).unwrap()).sum();
            assert_eq!(total, fact);
        }
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(component_count_pmf(1, 1.0f64).unwrap(), vec![1.0]);
        let p2 = component_count_pmf(2, 1.0f64).unwrap();
        assert!((p2[0] - 0.5).abs() < 1e-15 && (p2[1] - 0.5).abs() < 1e-15);
        let p3 = component_count_pmf(3, 1.0f64).unwrap();
        for (got, want) in p3.iter().zip([1.0 / 3.0, 0.5, 1.0 / 6.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(component_count_pmf(26, 1.0f64).is_err());
        assert!(component_count_pmf(0, 1.0f64).is_err());
    }

    #[test]
    fn expected_components_examples() {
        assert_eq!(expected_components(1, 1.0f64).0, 1.0);
        assert!((expected_components(3, 1.0f64).0 - 11.0 / 6.0).abs() < 1e-15);
        let (exact, approx) = expected_components(100, 1.0f64);
        assert!((exact - 5.187_377_517_639_621).abs() < 1e-12);
        assert!((approx - 101f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn crp_single_customer() {
        assert_eq!(crp_simulate(1, 2.0, 100, 0).unwrap(), vec![1.0]);
    }
}
