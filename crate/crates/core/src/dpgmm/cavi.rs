//! Coordinate-ascent variational inference for the truncated DP mixture.
//!
//! Factorization: `q(z) q(β) q(μ, λ)` with `q(z_n)` categorical, `q(β_t)`
//! Beta for `t < T − 1` (the last stick is fixed at 1), and a diagonal
//! Normal-Gamma `q(μ_k, λ_k)` per component. Each sweep updates the
//! global factors from the current responsibilities, records the ELBO, and
//! then updates the responsibilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::{DpGmmModel, DpGmmPrior, NormalGammaState, StickState};
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Scalar};
use crate::special::{digamma, ln_gamma};

/// Starting responsibilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaviInit {
    /// One-hot assignment to the nearest of `T` k-means++ seeds.
    KmeansPlusPlus,
    /// Independent symmetric Dirichlet(1) rows.
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaviConfig {
    pub truncation: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub init: CaviInit,
}

impl Default for CaviConfig {
    fn default() -> Self {
        CaviConfig {
            truncation: 10,
            tol: 1e-6,
            max_iter: 500,
            seed: 0,
            init: CaviInit::KmeansPlusPlus,
        }
    }
}

/// Weighted sufficient statistics per component.
struct Stats<S> {
    count: Vec<S>,
    mean: Vec<Vec<S>>,
    /// weighted population variance around `mean`
    scatter: Vec<Vec<S>>,
}

fn sufficient_stats<S: Scalar>(x: &[Vec<S>], resp: &[Vec<S>], prior_mean: &[S]) -> Stats<S> {
    let k = resp[0].len();
    let d = prior_mean.len();
    let mut count = vec![S::zero(); k];
    let mut sum = vec![vec![S::zero(); d]; k];
    for (row, r) in x.iter().zip(resp) {
        for j in 0..k {
            let w = r[j];
            count[j] = count[j] + w;
            for (s, &v) in sum[j].iter_mut().zip(row) {
                *s = *s + w * v;
            }
        }
    }
    let tiny = S::c(1e-300_f64.max(S::min_positive_value().as_f64()));
    let mean: Vec<Vec<S>> = (0..k)
        .map(|j| {
            if count[j] > tiny {
                sum[j].iter().map(|&s| s / count[j]).collect()
            } else {
                prior_mean.to_vec()
            }
        })
        .collect();
    let mut scatter = vec![vec![S::zero(); d]; k];
    for (row, r) in x.iter().zip(resp) {
        for j in 0..k {
            let w = r[j];
            for ((acc, &v), &m) in scatter[j].iter_mut().zip(row).zip(&mean[j]) {
                *acc = *acc + w * (v - m) * (v - m);
            }
        }
    }
    for j in 0..k {
        if count[j] > tiny {
            scatter[j].iter_mut().for_each(|s| *s = *s / count[j]);
        } else {
            scatter[j].iter_mut().for_each(|s| *s = S::zero());
        }
    }
    Stats { count, mean, scatter }
}

fn update_sticks<S: Scalar>(count: &[S], alpha0: S) -> StickState<S> {
    let t = count.len();
    let mut tail = S::zero();
    let mut gamma2 = vec![S::zero(); t.saturating_sub(1)];
    for j in (0..t.saturating_sub(1)).rev() {
        tail = tail + count[j + 1];
        gamma2[j] = alpha0 + tail;
    }
    let gamma1 = count[..t.saturating_sub(1)].iter().map(|&n| S::one() + n).collect();
    StickState { gamma1, gamma2 }
}

fn update_normal_gamma<S: Scalar>(stats: &Stats<S>, prior: &DpGmmPrior<S>) -> NormalGammaState<S> {
    let half = S::c(0.5);
    let k = stats.count.len();
    let mut state = NormalGammaState {
        kappa: Vec::with_capacity(k),
        mean: Vec::with_capacity(k),
        shape: Vec::with_capacity(k),
        rate: Vec::with_capacity(k),
    };
    for j in 0..k {
        let n = stats.count[j];
        let kappa = prior.kappa0 + n;
        let mean = stats.mean[j]
            .iter()
            .zip(&prior.mean)
            .map(|(&xb, &m0)| (prior.kappa0 * m0 + n * xb) / kappa)
            .collect();
        let rate = (0..prior.dim())
            .map(|d| {
                let dev = stats.mean[j][d] - prior.mean[d];
                prior.rate0[d] + half * n * stats.scatter[j][d] + half * prior.kappa0 * n * dev * dev / kappa
            })
            .collect();
        state.kappa.push(kappa);
        state.mean.push(mean);
        state.shape.push(prior.shape0 + half * n);
        state.rate.push(rate);
    }
    state
}

/// `E[ln π_k]` under the stick posteriors.
fn expected_log_weights<S: Scalar>(sticks: &StickState<S>, t: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(t);
    let mut acc = S::zero();
    for j in 0..t {
        if j + 1 < t {
            let (a, b) = (sticks.gamma1[j], sticks.gamma2[j]);
            let dsum = digamma(a + b);
            out.push(acc + digamma(a) - dsum);
            acc = acc + digamma(b) - dsum;
        } else {
            out.push(acc);
        }
    }
    out
}

/// Per-component, per-dimension `(E[ln λ], E[λ])`.
fn precision_moments<S: Scalar>(ng: &NormalGammaState<S>) -> (Vec<Vec<S>>, Vec<Vec<S>>) {
    let e_log: Vec<Vec<S>> = ng
        .shape
        .iter()
        .zip(&ng.rate)
        .map(|(&a, rates)| {
            let da = digamma(a);
            rates.iter().map(|&b| da - b.ln()).collect()
        })
        .collect();
    let e_prec = ng
        .shape
        .iter()
        .zip(&ng.rate)
        .map(|(&a, rates)| rates.iter().map(|&b| a / b).collect())
        .collect();
    (e_log, e_prec)
}

fn update_responsibilities<S: Scalar>(
    x: &[Vec<S>],
    sticks: &StickState<S>,
    ng: &NormalGammaState<S>,
) -> Vec<Vec<S>> {
    let t = ng.kappa.len();
    let half = S::c(0.5);
    let ln_2pi = S::c((2.0 * std::f64::consts::PI).ln());
    let e_log_pi = expected_log_weights(sticks, t);
    let (e_log_prec, e_prec) = precision_moments(ng);
    // constant part of each component's expected log density
    let base: Vec<S> = (0..t)
        .map(|j| {
            let d = S::from_usize_lossy(ng.mean[j].len());
            e_log_pi[j]
                + e_log_prec[j].iter().map(|&v| half * v).sum::<S>()
                - half * d * ln_2pi
                - half * d / ng.kappa[j]
        })
        .collect();
    x.iter()
        .map(|row| {
            let logs: Vec<S> = (0..t)
                .map(|j| {
                    let quad: S = row
                        .iter()
                        .zip(&ng.mean[j])
                        .zip(&e_prec[j])
                        .map(|((&v, &m), &p)| p * (v - m) * (v - m))
                        .sum();
                    base[j] - half * quad
                })
                .collect();
            let norm = log_sum_exp(&logs);
            logs.into_iter().map(|l| (l - norm).exp()).collect()
        })
        .collect()
}

fn elbo<S: Scalar>(
    resp: &[Vec<S>],
    stats: &Stats<S>,
    sticks: &StickState<S>,
    ng: &NormalGammaState<S>,
    prior: &DpGmmPrior<S>,
) -> S {
    let t = ng.kappa.len();
    let half = S::c(0.5);
    let ln_2pi = S::c((2.0 * std::f64::consts::PI).ln());
    let e_log_pi = expected_log_weights(sticks, t);
    let (e_log_prec, e_prec) = precision_moments(ng);
    let lg_a0 = ln_gamma(prior.shape0);

    let mut total = S::zero();
    for j in 0..t {
        let n = stats.count[j];
        let (kappa, a) = (ng.kappa[j], ng.shape[j]);
        let lg_a = ln_gamma(a);
        for d in 0..prior.dim() {
            let (el, ep) = (e_log_prec[j][d], e_prec[j][d]);
            let (m, b) = (ng.mean[j][d], ng.rate[j][d]);
            let xb = stats.mean[j][d];

            // E[ln p(x | z, μ, λ)]
            total = total + n * (half * el - half * ln_2pi)
                - half * (n / kappa + ep * n * (stats.scatter[j][d] + (xb - m) * (xb - m)));

            // E[ln p(μ, λ)]
            let dev0 = m - prior.mean[d];
            total = total + half * prior.kappa0.ln() - half * ln_2pi + half * el
                - half * prior.kappa0 * (kappa.recip() + ep * dev0 * dev0)
                + prior.shape0 * prior.rate0[d].ln()
                - lg_a0
                + (prior.shape0 - S::one()) * el
                - prior.rate0[d] * ep;

            // −E[ln q(μ, λ)]
            total = total
                - (half * kappa.ln() - half * ln_2pi + half * el - half + a * b.ln() - lg_a + (a - S::one()) * el
                    - a);
        }
        // E[ln p(z | β)]
        total = total + n * e_log_pi[j];
    }

    for j in 0..t.saturating_sub(1) {
        let (g1, g2) = (sticks.gamma1[j], sticks.gamma2[j]);
        let dsum = digamma(g1 + g2);
        let e_log_b = digamma(g1) - dsum;
        let e_log_1mb = digamma(g2) - dsum;
        // E[ln p(β)] with Beta(1, α0)
        total = total + prior.alpha0.ln() + (prior.alpha0 - S::one()) * e_log_1mb;
        // −E[ln q(β)]
        total = total
            - (ln_gamma(g1 + g2) - ln_gamma(g1) - ln_gamma(g2)
                + (g1 - S::one()) * e_log_b
                + (g2 - S::one()) * e_log_1mb);
    }

    // −E[ln q(z)]
    for r in resp {
        for &v in r {
            if v > S::zero() {
                total = total - v * v.ln();
            }
        }
    }
    total
}

fn dirichlet_rows<S: Scalar>(n: usize, t: usize, seed: u64) -> Vec<Vec<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let draws: Vec<f64> = (0..t).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            draws.into_iter().map(|v| S::c(v / total)).collect()
        })
        .collect()
}

fn sq_dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&u, &v)| acc + (u - v) * (u - v))
}

/// k-means++ seeding, then each row one-hot on its nearest seed (ties to the
/// lowest index).
fn kmeans_pp_rows<S: Scalar>(x: &[Vec<S>], t: usize, seed: u64) -> Vec<Vec<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.len();
    let mut centers = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = x.iter().map(|r| sq_dist(r, &x[centers[0]]).as_f64()).collect();
    while centers.len() < t {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for (dist, row) in d2.iter_mut().zip(x) {
            *dist = dist.min(sq_dist(row, &x[next]).as_f64());
        }
    }
    x.iter()
        .map(|row| {
            let dists: Vec<S> = centers.iter().map(|&c| -sq_dist(row, &x[c])).collect();
            let best = crate::scalar::argmax(&dists);
            (0..t).map(|j| if j == best { S::one() } else { S::zero() }).collect()
        })
        .collect()
}

/// Fits the truncated DP mixture to the rows of `x`.
pub fn fit_cavi<S: Scalar>(x: &[Vec<S>], prior: &DpGmmPrior<S>, config: &CaviConfig) -> Result<DpGmmModel<S>> {
    if config.truncation < 1 {
        return Err(Error::domain("truncation level must be at least 1"));
    }
    if x.len() < 2 {
        return Err(Error::domain("need at least two data points"));
    }
    prior.validate()?;
    let d = prior.dim();
    for row in x {
        if row.len() != d {
            return Err(Error::dims("data row", d, row.len()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("clustering input".into()));
        }
    }
    let t = config.truncation;
    let mut resp = match config.init {
        CaviInit::KmeansPlusPlus => kmeans_pp_rows(x, t, config.seed),
        CaviInit::Dirichlet => dirichlet_rows::<S>(x.len(), t, config.seed),
    };
    let mut trace: Vec<S> = Vec::new();
    let mut converged = false;
    let (mut sticks, mut ng);
    let mut iterations = 0;
    loop {
        let stats = sufficient_stats(x, &resp, &prior.mean);
        sticks = update_sticks(&stats.count, prior.alpha0);
        ng = update_normal_gamma(&stats, prior);
        let value = elbo(&resp, &stats, &sticks, &ng, prior);
        iterations += 1;
        if let Some(&prev) = trace.last() {
            let prev: S = prev;
            if (value - prev).abs() < S::c(config.tol) * prev.abs() {
                converged = true;
            }
        }
        trace.push(value);
        if converged || iterations >= config.max_iter {
            break;
        }
        resp = update_responsibilities(x, &sticks, &ng);
    }

    let fractions = sticks.mean_fractions();
    let mut weights = Vec::with_capacity(t);
    let mut remaining = S::one();
    for &f in &fractions {
        weights.push(f * remaining);
        remaining = remaining * (S::one() - f);
    }
    let total: S = weights.iter().copied().sum();
    weights.iter_mut().for_each(|w| *w = *w / total);
    let floor = S::c(crate::VARIANCE_FLOOR);
    let variances = ng
        .shape
        .iter()
        .zip(&ng.rate)
        .map(|(&a, rates)| rates.iter().map(|&b| (b / a).max(floor)).collect())
        .collect();

    Ok(DpGmmModel {
        truncation: t,
        prior: prior.clone(),
        means: ng.mean.clone(),
        variances,
        weights,
        sticks: Some(sticks),
        posterior: Some(ng),
        active_mask: vec![true; t],
        elbo_trace: trace,
        iterations,
        converged,
    })
}
