use serde::{Deserialize, Serialize};

use super::DpGmmModel;
use crate::error::{Error, Result};
use crate::scalar::{argmax, log_sum_exp, Scalar};

/// Posterior component probabilities, one row per datum. Column `j`
/// corresponds to `components[j]`, the `j`-th active component.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities<S> {
    pub rows: Vec<Vec<S>>,
    pub components: Vec<usize>,
}

/// `ln ω_k + ln N(x | μ_k, diag σ²_k)` for every active component.
pub(crate) fn log_weighted_densities<S: Scalar>(model: &DpGmmModel<S>, x: &[S], active: &[usize]) -> Vec<S> {
    let half = S::c(0.5);
    let ln_2pi = S::c((2.0 * std::f64::consts::PI).ln());
    active
        .iter()
        .map(|&k| {
            let dens: S = x
                .iter()
                .zip(&model.means[k])
                .zip(&model.variances[k])
                .map(|((&v, &m), &s2)| -half * (ln_2pi + s2.ln() + (v - m) * (v - m) / s2))
                .sum();
            model.weights[k].ln() + dens
        })
        .collect()
}

/// `r[i][j] = ω_j N(x_i | μ_j, σ_j) / Σ_l ω_l N(x_i | μ_l, σ_l)` over active
/// components, evaluated in log space.
pub fn responsibilities<S: Scalar>(model: &DpGmmModel<S>, x: &[Vec<S>]) -> Result<Responsibilities<S>> {
    let active = model.active_indices();
    let d = model.dim();
    let mut rows = Vec::with_capacity(x.len());
    for row in x {
        if row.len() != d {
            return Err(Error::dims("clustering features", d, row.len()));
        }
        let logs = log_weighted_densities(model, row, &active);
        let norm = log_sum_exp(&logs);
        rows.push(logs.into_iter().map(|l| (l - norm).exp()).collect());
    }
    Ok(Responsibilities {
        rows,
        components: active,
    })
}

/// Position (among active components) of each row's most probable component.
/// Ties go to the lowest position.
pub fn hard_assign<S: Scalar>(model: &DpGmmModel<S>, x: &[Vec<S>]) -> Result<Vec<usize>> {
    Ok(responsibilities(model, x)?.rows.iter().map(|r| argmax(r)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    /// Hard-assignment share of each previously active component.
    pub shares: Vec<(usize, f64)>,
    pub pruned: Vec<usize>,
    pub survivors: Vec<usize>,
    /// Data whose assignment moved to a different component.
    pub reassigned: usize,
    pub total: usize,
}

/// Deactivates components holding less than `threshold` of the hard
/// assignments, renormalizes the surviving weights and reassigns every datum.
/// The largest component always survives.
pub fn prune_and_reassign<S: Scalar>(
    model: &DpGmmModel<S>,
    x: &[Vec<S>],
    threshold: f64,
) -> Result<(DpGmmModel<S>, Vec<usize>, PruneReport)> {
    if x.is_empty() {
        return Err(Error::domain("cannot prune against an empty data set"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::domain("pruning threshold must lie in (0, 1)"));
    }
    let active = model.active_indices();
    let before = hard_assign(model, x)?;
    let mut counts = vec![0usize; active.len()];
    for &a in &before {
        counts[a] += 1;
    }
    let n = x.len() as f64;
    let shares: Vec<(usize, f64)> = active.iter().zip(&counts).map(|(&k, &c)| (k, c as f64 / n)).collect();
    let mut keep: Vec<bool> = shares.iter().map(|&(_, s)| s >= threshold).collect();
    if !keep.iter().any(|&k| k) {
        keep[argmax(&counts)] = true;
    }

    let mut pruned_model = model.clone();
    let mut pruned = Vec::new();
    let mut survivors = Vec::new();
    for (&k, &kp) in active.iter().zip(&keep) {
        if kp {
            survivors.push(k);
        } else {
            pruned.push(k);
            pruned_model.active_mask[k] = false;
        }
    }
    for (k, w) in pruned_model.weights.iter_mut().enumerate() {
        if !pruned_model.active_mask[k] {
            *w = S::zero();
        }
    }
    let total: S = pruned_model.weights.iter().copied().sum();
    if total > S::zero() {
        pruned_model.weights.iter_mut().for_each(|w| *w = *w / total);
    } else {
        // every survivor had zero weight; share the mass evenly
        let even = S::from_usize_lossy(survivors.len()).recip();
        for &k in &survivors {
            pruned_model.weights[k] = even;
        }
    }

    let after = hard_assign(&pruned_model, x)?;
    let reassigned = before
        .iter()
        .zip(&after)
        .filter(|(&b, &a)| active[b] != survivors[a])
        .count();
    let report = PruneReport {
        shares,
        pruned,
        survivors,
        reassigned,
        total: x.len(),
    };
    Ok((pruned_model, after, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn three_component_model(weights: [f64; 3]) -> DpGmmModel<f64> {
        DpGmmModel::from_components(
            weights.to_vec(),
            vec![vec![0.0], vec![10.0], vec![20.0]],
            vec![vec![1.0], vec![1.0], vec![1.0]],
        )
        .unwrap()
    }

    fn data_with_counts(counts: [usize; 3]) -> Vec<Vec<f64>> {
        let mut x = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            x.extend((0..n).map(|i| vec![10.0 * c as f64 + (i as f64 * 0.013).sin() * 0.2]));
        }
        x
    }

    #[test]
    fn identical_components_split_evenly() {
        let m = DpGmmModel::from_components(vec![0.5, 0.5], vec![vec![1.0, 2.0]; 2], vec![vec![0.3, 4.0]; 2]).unwrap();
        let r = responsibilities(&m, &[vec![0.0, 0.0], vec![5.0, -3.0]]).unwrap();
        for row in &r.rows {
            assert!(row.iter().all(|&v| (v - 0.5f64).abs() < 1e-15));
        }
        assert_eq!(hard_assign(&m, &[vec![0.0, 0.0]]).unwrap(), vec![0]);
    }

    #[test]
    fn far_separated_components_are_decisive() {
        // ‖μ1 − μ2‖/σ = 20
        let m = DpGmmModel::from_components(vec![0.5, 0.5], vec![vec![0.0], vec![20.0]], vec![vec![1.0]; 2]).unwrap();
        let r = responsibilities(&m, &[vec![0.0]]).unwrap();
        // direct ratio: 1 / (1 + exp(−200))
        assert!(r.rows[0][0] > 1.0 - 1e-10);
    }

    #[test]
    fn single_component_assigns_zero() {
        let m = DpGmmModel::from_components(vec![1.0], vec![vec![0.0]], vec![vec![1.0]]).unwrap();
        assert_eq!(hard_assign(&m, &[vec![3.0], vec![-100.0]]).unwrap(), vec![0, 0]);
        let (pruned, a, report) = prune_and_reassign(&m, &[vec![1.0], vec![2.0]], 0.1).unwrap();
        assert_eq!(pruned, m);
        assert_eq!(a, vec![0, 0]);
        assert!(report.pruned.is_empty());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = DpGmmModel::from_components(vec![1.0], vec![vec![0.0, 0.0]], vec![vec![1.0, 1.0]]).unwrap();
        assert!(responsibilities(&m, &[vec![1.0]]).is_err());
    }

    #[test]
    fn prunes_small_share() {
        let m = three_component_model([0.85, 0.12, 0.03]);
        let x = data_with_counts([85, 12, 3]);
        let (pruned, assign, report) = prune_and_reassign(&m, &x, 0.10).unwrap();
        assert_eq!(report.pruned, vec![2]);
        assert_eq!(report.survivors, vec![0, 1]);
        assert_eq!(pruned.active_mask, vec![true, true, false]);
        assert!((pruned.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(assign.len(), 100);
        assert_eq!(report.reassigned, 3);
        assert!(assign[97..].iter().all(|&a| a == 1));
    }

    #[test]
    fn eighty_twenty_split_is_kept() {
        let m = DpGmmModel::from_components(vec![0.8, 0.2], vec![vec![0.0], vec![10.0]], vec![vec![1.0]; 2]).unwrap();
        let mut x: Vec<Vec<f64>> = (0..80).map(|_| vec![0.0]).collect();
        x.extend((0..20).map(|_| vec![10.0]));
        let (pruned, _, report) = prune_and_reassign(&m, &x, 0.10).unwrap();
        assert!(report.pruned.is_empty());
        assert_eq!(pruned.n_active(), 2);
    }

    #[test]
    fn largest_component_survives_when_all_are_small() {
        let m = three_component_model([0.34, 0.33, 0.33]);
        let x = data_with_counts([40, 30, 30]);
        let (pruned, assign, _) = prune_and_reassign(&m, &x, 0.5).unwrap();
        assert_eq!(pruned.active_indices(), vec![0]);
        assert!(assign.iter().all(|&a| a == 0));
        assert!(prune_and_reassign(&m, &[], 0.1).is_err());
    }

    proptest! {
        #[test]
        fn rows_normalized_and_weight_scale_invariant(
            w in proptest::collection::vec(0.01f64..1.0, 1..5),
            xs in proptest::collection::vec(-5.0f64..5.0, 1..10),
            c in 0.01f64..100.0,
        ) {
            let k = w.len();
            let means: Vec<Vec<f64>> = (0..k).map(|i| vec![i as f64 - 1.5]).collect();
            let vars: Vec<Vec<f64>> = (0..k).map(|i| vec![0.5 + i as f64]).collect();
            let mut m = DpGmmModel::from_components(w.clone(), means, vars).unwrap();
            let data: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
            let r1 = responsibilities(&m, &data).unwrap();
            for row in &r1.rows {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
            m.weights.iter_mut().for_each(|v| *v *= c);
            let r2 = responsibilities(&m, &data).unwrap();
            for (a, b) in r1.rows.iter().zip(&r2.rows) {
                for (p, q) in a.iter().zip(b) {
                    prop_assert!((p - q).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn pruning_conserves_data(
            counts in proptest::collection::vec(0usize..40, 3),
            threshold in 0.01f64..0.99,
        ) {
            let counts = [counts[0], counts[1], counts[2] + 1];
            let m = three_component_model([0.3, 0.3, 0.4]);
            let x = data_with_counts(counts);
            let (pruned, assign, report) = prune_and_reassign(&m, &x, threshold).unwrap();
            prop_assert_eq!(assign.len(), x.len());
            prop_assert_eq!(report.total, x.len());
            prop_assert!(pruned.n_active() >= 1);
            prop_assert!(assign.iter().all(|&a| a < pruned.n_active()));
        }
    }
}
